use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FitError;

pub const MIN_POINTS: usize = 8;

/// Coincidence counts against delay, sorted by delay with unique delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceDataset {
    pub delays_ps: Vec<f64>,
    pub counts: Vec<f64>,
    pub uncertainties: Option<Vec<f64>>,
}

impl CoincidenceDataset {
    /// Sorts by delay and averages repeated delays. Repeated points combine
    /// their uncertainties as sqrt(Σσ²)/n.
    pub fn new(
        delays_ps: Vec<f64>,
        counts: Vec<f64>,
        uncertainties: Option<Vec<f64>>,
    ) -> Result<Self, FitError> {
        if counts.len() != delays_ps.len()
            || uncertainties
                .as_ref()
                .is_some_and(|u| u.len() != delays_ps.len())
        {
            return Err(FitError::Invalid("column lengths differ".into()));
        }
        if delays_ps.iter().chain(&counts).any(|v| !v.is_finite()) {
            return Err(FitError::Invalid("non-finite value".into()));
        }
        if counts.iter().any(|&c| c < 0.0) {
            return Err(FitError::Invalid("negative count".into()));
        }
        if let Some(u) = &uncertainties {
            if u.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(FitError::Invalid("uncertainties must be positive".into()));
            }
        }

        let mut order: Vec<usize> = (0..delays_ps.len()).collect();
        order.sort_by(|&a, &b| delays_ps[a].total_cmp(&delays_ps[b]));
        let mut out_d: Vec<f64> = Vec::with_capacity(order.len());
        let mut out_c = Vec::with_capacity(order.len());
        let mut out_u = Vec::with_capacity(order.len());
        let mut duplicates = 0;
        let mut k = 0;
        while k < order.len() {
            let d = delays_ps[order[k]];
            let mut end = k + 1;
            while end < order.len() && delays_ps[order[end]] == d {
                end += 1;
            }
            let group = &order[k..end];
            let n = group.len() as f64;
            duplicates += group.len() - 1;
            out_d.push(d);
            out_c.push(group.iter().map(|&j| counts[j]).sum::<f64>() / n);
            if let Some(u) = &uncertainties {
                out_u.push(group.iter().map(|&j| u[j] * u[j]).sum::<f64>().sqrt() / n);
            }
            k = end;
        }
        if duplicates > 0 {
            log::warn!("averaged {duplicates} repeated delay value(s)");
        }
        if out_d.len() < MIN_POINTS {
            return Err(FitError::InsufficientData {
                found: out_d.len(),
                needed: MIN_POINTS,
            });
        }
        Ok(CoincidenceDataset {
            delays_ps: out_d,
            counts: out_c,
            uncertainties: uncertainties.map(|_| out_u),
        })
    }

    pub fn len(&self) -> usize {
        self.delays_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_ps.is_empty()
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.uncertainties.as_ref().map_or(1.0, |u| u[k])
    }
}

/// Reads `delay_ps,counts[,sigma]` rows. A first row that does not parse as
/// numbers is taken as a header.
pub fn ingest_csv(path: &Path) -> Result<CoincidenceDataset, FitError> {
    let file = std::fs::File::open(path).map_err(|e| FitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    ingest_reader(file)
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<CoincidenceDataset, FitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut delays = Vec::new();
    let mut counts = Vec::new();
    let mut sigmas = Vec::new();
    let mut columns = None;
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| FitError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if columns.is_none() && delays.is_empty() && index == 0 => continue,
            Err(_) => {
                return Err(FitError::Parse {
                    line,
                    message: format!(
                        "non-numeric field in {:?}",
                        record.iter().collect::<Vec<_>>()
                    ),
                })
            }
        };
        if values.len() != 2 && values.len() != 3 {
            return Err(FitError::Parse {
                line,
                message: format!("expected 2 or 3 columns, found {}", values.len()),
            });
        }
        match columns {
            None => columns = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(FitError::Parse {
                    line,
                    message: format!("expected {c} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        delays.push(values[0]);
        counts.push(values[1]);
        if values.len() == 3 {
            sigmas.push(values[2]);
        }
    }
    let uncertainties = (columns == Some(3)).then_some(sigmas);
    CoincidenceDataset::new(delays, counts, uncertainties)
}
