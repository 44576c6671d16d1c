//! Prevalence datasets.

use std::path::Path;

use crate::error::{Error, Result};

/// Prevalence counts `Y_1..Y_L` recorded at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    /// Assumed population size.
    pub population: usize,
}

impl Dataset {
    pub fn new(times: Vec<f64>, counts: Vec<u64>, population: usize) -> Result<Self> {
        let ds = Dataset { times, counts, population };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.counts.len() {
            return Err(Error::InvalidDataset(format!(
                "{} times but {} counts",
                self.times.len(),
                self.counts.len()
            )));
        }
        if self.population == 0 {
            return Err(Error::InvalidDataset("population size must be positive".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidDataset("non-finite observation time".into()));
        }
        if let Some(w) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDataset(format!(
                "times not strictly increasing at index {}",
                w + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The observation window `[t_1, t_L]`.
    pub fn window(&self) -> (f64, f64) {
        match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        }
    }

    /// Parses a `time,count` CSV. `population` is supplied separately since
    /// the file carries only the observations.
    pub fn parse_csv(text: &str, population: usize) -> Result<Self> {
        let (times, counts) = parse_time_count_csv(text)?;
        Dataset::new(times, counts, population)
    }

    pub fn read_csv(path: &Path, population: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, population)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,count\n");
        for (t, y) in self.times.iter().zip(&self.counts) {
            out.push_str(&format!("{t:?},{y}\n"));
        }
        out
    }
}

/// CSV reader shared by every input format: fields are trimmed and lines
/// starting with `#` skipped.
pub(crate) fn csv_reader(text: &str, headers: bool, flexible: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .flexible(flexible)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, msg: e.to_string() }
}

pub(crate) fn record_line(r: &csv::StringRecord) -> usize {
    r.position().map_or(0, |p| p.line() as usize)
}

/// Parses the observation columns without validating ordering.
pub fn parse_time_count_csv(text: &str) -> Result<(Vec<f64>, Vec<u64>)> {
    let mut rdr = csv_reader(text, true, false);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() == 0 {
        return Err(Error::Parse { line: 1, msg: "empty file".into() });
    }
    if header.iter().collect::<Vec<_>>() != ["time", "count"] {
        return Err(Error::Parse {
            line: record_line(&header),
            msg: format!("expected header 'time,count', found '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut times = Vec::new();
    let mut counts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let t: f64 = rec[0]
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad time '{}'", &rec[0]) })?;
        let y: u64 = rec[1]
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad count '{}'", &rec[1]) })?;
        times.push(t);
        counts.push(y);
    }
    Ok((times, counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv() {
        let ds = Dataset::parse_csv("time,count\n0,1\n1.5, 3\n\n# trailing\n2,0\n", 10).unwrap();
        assert_eq!(ds.times, vec![0.0, 1.5, 2.0]);
        assert_eq!(ds.counts, vec![1, 3, 0]);
        assert_eq!(ds.window(), (0.0, 2.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Dataset::parse_csv("t,y\n0,1\n", 10).is_err());
        assert!(Dataset::parse_csv("time,count\n0,-1\n", 10).is_err());
        assert!(Dataset::parse_csv("time,count\n1,1\n1,2\n", 10).is_err());
        assert!(Dataset::parse_csv("time,count\n1,1,3\n", 10).is_err());
        assert!(Dataset::parse_csv("time,count\nNaN,1\n", 10).is_err());
        assert!(Dataset::parse_csv("time,count\n0,1\n", 0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let ds = Dataset::new(vec![0.0, 0.1, 7.25], vec![0, 4, 2], 5).unwrap();
        assert_eq!(Dataset::parse_csv(&ds.to_csv(), 5).unwrap(), ds);
    }
}
