use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One station's annual-maximum record.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station_id: String,
    /// Strictly increasing.
    pub years: Vec<i64>,
    pub values: Vec<f64>,
    /// Covariate aligned with `years`, when known.
    pub covariate: Option<Vec<f64>>,
}

impl StationSeries {
    pub fn new(station_id: impl Into<String>, years: Vec<i64>, values: Vec<f64>, covariate: Option<Vec<f64>>) -> Result<Self> {
        let station_id = station_id.into();
        let bad = |reason: &str| Error::InsufficientData {
            station: station_id.clone(),
            reason: reason.to_string(),
        };
        if years.len() != values.len() || covariate.as_ref().is_some_and(|c| c.len() != years.len()) {
            return Err(Error::ShapeMismatch(format!(
                "station `{station_id}`: years, values and covariate lengths differ"
            )));
        }
        if !years.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("years must be strictly increasing"));
        }
        if values.iter().chain(covariate.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(bad("values and covariates must be finite"));
        }
        Ok(StationSeries {
            station_id,
            years,
            values,
            covariate,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of reading a station file.
#[derive(Debug, Clone, PartialEq)]
pub struct StationLoad {
    /// Sorted by station id; years ascending within each station.
    pub series: Vec<StationSeries>,
    /// Rows skipped because the value field was blank.
    pub dropped_rows: usize,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, allowed: &[&[&str]]) -> Result<usize> {
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    let fields: Vec<&str> = header.iter().collect();
    allowed
        .iter()
        .find(|h| **h == fields.as_slice())
        .map(|h| h.len())
        .ok_or_else(|| {
            let want: Vec<String> = allowed.iter().map(|h| h.join(",")).collect();
            parse_err(path, 1, format!("header must be one of {want:?}, found `{}`", fields.join(",")))
        })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} `{field}`")))
}

/// Read `station_id,year,value[,covariate]` rows, grouping by station.
pub fn load_station_csv(path: impl AsRef<Path>) -> Result<StationLoad> {
    let path = path.as_ref();
    let mut rdr = open(path)?;
    let width = check_header(
        path,
        &mut rdr,
        &[&["station_id", "year", "value"], &["station_id", "year", "value", "covariate"]],
    )?;
    type Row = (f64, Option<f64>);
    let mut grouped: BTreeMap<String, BTreeMap<i64, Row>> = BTreeMap::new();
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", rec.len())));
        }
        let station = rec[0].to_string();
        if station.is_empty() {
            return Err(parse_err(path, line, "empty station_id"));
        }
        let year: i64 = parse_num(path, line, &rec[1], "year")?;
        if !seen.insert((station.clone(), year)) {
            return Err(Error::DuplicateRow {
                path: path.display().to_string(),
                line,
                station,
                year,
            });
        }
        if rec[2].is_empty() || (width == 4 && rec[3].is_empty()) {
            dropped += 1;
            continue;
        }
        let value: f64 = parse_num(path, line, &rec[2], "value")?;
        let cov = if width == 4 {
            Some(parse_num::<f64>(path, line, &rec[3], "covariate")?)
        } else {
            None
        };
        if !value.is_finite() || cov.is_some_and(|c| !c.is_finite()) {
            return Err(parse_err(path, line, "non-finite number"));
        }
        grouped.entry(station).or_default().insert(year, (value, cov));
    }
    let series = grouped
        .into_iter()
        .map(|(id, rows)| {
            let years: Vec<i64> = rows.keys().copied().collect();
            let values: Vec<f64> = rows.values().map(|r| r.0).collect();
            let covariate = (width == 4).then(|| rows.values().map(|r| r.1.unwrap_or(f64::NAN)).collect());
            StationSeries::new(id, years, values, covariate)
        })
        .collect::<Result<_>>()?;
    Ok(StationLoad {
        series,
        dropped_rows: dropped,
    })
}

/// Write series in the format read by [`load_station_csv`].
pub fn write_station_csv(path: impl AsRef<Path>, series: &[StationSeries]) -> Result<()> {
    let path = path.as_ref();
    let with_cov = series.iter().any(|s| s.covariate.is_some());
    let mut out = String::from(if with_cov {
        "station_id,year,value,covariate\n"
    } else {
        "station_id,year,value\n"
    });
    for s in series {
        for i in 0..s.len() {
            out.push_str(&format!("{},{},{}", s.station_id, s.years[i], s.values[i]));
            if with_cov {
                match &s.covariate {
                    Some(c) => out.push_str(&format!(",{}", c[i])),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Read a `year,covariate` file.
pub fn load_covariate_csv(path: impl AsRef<Path>) -> Result<BTreeMap<i64, f64>> {
    let path = path.as_ref();
    let mut rdr = open(path)?;
    check_header(path, &mut rdr, &[&["year", "covariate"]])?;
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let year: i64 = parse_num(path, line, &rec[0], "year")?;
        let value: f64 = parse_num(path, line, &rec[1], "covariate")?;
        if !value.is_finite() {
            return Err(parse_err(path, line, "non-finite covariate"));
        }
        if map.insert(year, value).is_some() {
            return Err(parse_err(path, line, format!("duplicate year {year}")));
        }
    }
    Ok(map)
}

/// Attach covariate values to every series; fails on the first year without one.
pub fn join_covariate(series: &mut [StationSeries], covariate: &BTreeMap<i64, f64>) -> Result<()> {
    for s in series.iter_mut() {
        let values = s
            .years
            .iter()
            .map(|y| {
                covariate.get(y).copied().ok_or_else(|| Error::MissingYear {
                    station: s.station_id.clone(),
                    year: *y,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        s.covariate = Some(values);
    }
    Ok(())
}

/// Split series into those with at least `min_years` observations and the ids of the rest.
pub fn filter_min_years(series: Vec<StationSeries>, min_years: usize) -> (Vec<StationSeries>, Vec<String>) {
    let (kept, short): (Vec<_>, Vec<_>) = series.into_iter().partition(|s| s.len() >= min_years);
    (kept, short.into_iter().map(|s| s.station_id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn groups_two_stations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "station_id,year,value\nB,2001,1.5\nA,2000,1\nA,2002,3\nB,2000,2\nA,2001,2\nB,2002,0.5\n",
        );
        let load = load_station_csv(&p).unwrap();
        assert_eq!(load.series.len(), 2);
        assert_eq!(load.series[0].station_id, "A");
        assert_eq!(load.series[0].years, vec![2000, 2001, 2002]);
        assert_eq!(load.series[1].values, vec![2.0, 1.5, 0.5]);
        assert_eq!(load.dropped_rows, 0);
    }

    #[test]
    fn duplicate_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "station_id,year,value\nA,2000,1\nA,2000,2\n");
        match load_station_csv(&p) {
            Err(Error::DuplicateRow { line, station, year, .. }) => {
                assert_eq!((line, station.as_str(), year), (3, "A", 2000));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blank_value_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "station_id,year,value\nA,2000,1\nA,2001,\nA,2002,2\n");
        let load = load_station_csv(&p).unwrap();
        assert_eq!(load.dropped_rows, 1);
        assert_eq!(load.series[0].years, vec![2000, 2002]);
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "station_id,year,value\nA,2000,1\nA,20x1,2\n");
        assert!(matches!(load_station_csv(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "h.csv", "id,year,value\n");
        assert!(matches!(load_station_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn covariate_join() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = std::iter::once("year,covariate\n".to_string())
            .chain((1900..=2014).map(|y| format!("{y},{}\n", (y - 1900) as f64 * 0.01)))
            .collect();
        let p = write(&dir, "c.csv", &body);
        let cov = load_covariate_csv(&p).unwrap();
        assert_eq!(cov.len(), 115);
        let mut s = vec![StationSeries::new("A", vec![1950, 1951], vec![1.0, 2.0], None).unwrap()];
        join_covariate(&mut s, &cov).unwrap();
        assert_eq!(s[0].covariate.as_ref().unwrap()[1], 0.51);
        let mut s = vec![StationSeries::new("A", vec![1850], vec![1.0], None).unwrap()];
        assert!(matches!(join_covariate(&mut s, &cov), Err(Error::MissingYear { year: 1850, .. })));
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let series = vec![
            StationSeries::new("X1", vec![1990, 1991], vec![0.1 + 0.2, 1e-300], Some(vec![-0.3, 1.0 / 3.0])).unwrap(),
            StationSeries::new("X2", vec![2000], vec![175.108], Some(vec![0.0])).unwrap(),
        ];
        let p = dir.path().join("rt.csv");
        write_station_csv(&p, &series).unwrap();
        assert_eq!(load_station_csv(&p).unwrap().series, series);
    }

    #[test]
    fn year_floor_filter() {
        let a = StationSeries::new("A", (0..60).collect(), vec![1.0; 60], None).unwrap();
        let b = StationSeries::new("B", (0..59).collect(), vec![1.0; 59], None).unwrap();
        let (kept, skipped) = filter_min_years(vec![a, b], 60);
        assert_eq!(kept.len(), 1);
        assert_eq!(skipped, vec!["B".to_string()]);
    }
}
