//! CSV input, standardization and plain-text outputs.
//!
//! Every output file is written to a temporary file in the destination
//! directory and renamed into place, so a failed run never leaves a partial
//! file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::PosteriorSummary;
use crate::error::{Error, Result};
use crate::inference::Chain;
use crate::models::Dataset;

/// A numeric table read from disk: one response column plus zero or more
/// feature columns, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub response_name: String,
    pub feature_names: Vec<String>,
    pub response: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Scalar data when there are no features, regression data (with an
    /// intercept column) otherwise.
    pub fn to_dataset(&self) -> Result<Dataset> {
        if self.feature_names.is_empty() {
            Dataset::scalar(self.response.clone())
        } else {
            Dataset::regression(self.response.clone(), &self.rows)
        }
    }
}

/// Header normalization: surrounding quotes and whitespace removed, inner
/// whitespace runs turned into dots ("fixed acidity" → "fixed.acidity").
pub fn normalize_header(name: &str) -> String {
    name.trim()
        .trim_matches('"')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(".")
}

fn sniff_delimiter(first_line: &str) -> u8 {
    if first_line.matches(';').count() > first_line.matches(',').count() {
        b';'
    } else {
        b','
    }
}

/// Reads `response` and `features` (by normalized header name) from a CSV
/// file with a header row; `;` or `,` delimited.
pub fn load_csv(path: &Path, response: &str, features: &[String]) -> Result<Table> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let delimiter = sniff_delimiter(text.lines().next().unwrap_or(""));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(normalize_header).collect();
    let find = |name: &str| {
        let wanted = normalize_header(name);
        headers
            .iter()
            .position(|h| *h == wanted)
            .ok_or(Error::MissingColumn(wanted))
    };
    let y_col = find(response)?;
    let x_cols = features.iter().map(|f| find(f)).collect::<Result<Vec<_>>>()?;

    let mut table = Table {
        response_name: headers[y_col].clone(),
        feature_names: x_cols.iter().map(|&c| headers[c].clone()).collect(),
        response: Vec::new(),
        rows: Vec::new(),
    };
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // Row numbers count the header as row 1.
        let row = r + 2;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("'{raw}' is not a finite number"),
                })
        };
        table.response.push(cell(y_col)?);
        table.rows.push(x_cols.iter().map(|&c| cell(c)).collect::<Result<_>>()?);
    }
    if table.is_empty() {
        return Err(Error::EmptyData);
    }
    log::info!(
        "loaded {} rows from {} (response '{}', {} features)",
        table.len(),
        path.display(),
        table.response_name,
        table.feature_names.len()
    );
    Ok(table)
}

/// Column means and standard deviations used by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn to_text(&self) -> String {
        let mut s = String::from("column,mean,sd\n");
        for ((n, m), sd) in self.names.iter().zip(&self.means).zip(&self.sds) {
            let _ = writeln!(s, "{n},{m},{sd}");
        }
        s
    }
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Z-scores the response and every feature (sample standard deviation).
/// The record lists the response first, then the features.
pub fn standardize(table: &Table) -> Result<(Table, Standardization)> {
    if table.len() < 2 {
        return Err(Error::EmptyData);
    }
    let p = table.feature_names.len();
    let mut record = Standardization {
        names: Vec::with_capacity(p + 1),
        means: Vec::with_capacity(p + 1),
        sds: Vec::with_capacity(p + 1),
    };
    let mut push = |name: &str, (m, sd): (f64, f64)| -> Result<()> {
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        record.names.push(name.to_string());
        record.means.push(m);
        record.sds.push(sd);
        Ok(())
    };
    push(&table.response_name, mean_sd(table.response.iter().copied()))?;
    for (c, name) in table.feature_names.iter().enumerate() {
        push(name, mean_sd(table.rows.iter().map(|r| r[c])))?;
    }
    let z = |x: f64, c: usize| (x - record.means[c]) / record.sds[c];
    let out = Table {
        response_name: table.response_name.clone(),
        feature_names: table.feature_names.clone(),
        response: table.response.iter().map(|&y| z(y, 0)).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(c, &x)| z(x, c + 1)).collect())
            .collect(),
    };
    Ok((out, record))
}

/// Writes `contents` to `path` via a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `chain,iter,theta_0,…,theta_{d−1},log_kernel` with shortest round-trip
/// float formatting.
pub fn draws_csv(chains: &[Chain]) -> String {
    let d = chains.first().map_or(0, Chain::dim);
    let mut s = String::from("chain,iter");
    for i in 0..d {
        let _ = write!(s, ",theta_{i}");
    }
    s.push_str(",log_kernel\n");
    for (c, chain) in chains.iter().enumerate() {
        for it in 0..chain.len() {
            let _ = write!(s, "{c},{it}");
            for v in chain.draw(it) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", chain.log_kernel[it]);
        }
    }
    s
}

/// Parses the output of [`draws_csv`] back into chains (seeds are not stored
/// and come back as 0; per-chain statistics are not restored).
pub fn parse_draws_csv(text: &str) -> Result<Vec<Chain>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let d = headers.len().saturating_sub(3);
    if d == 0 || &headers[0] != "chain" || &headers[headers.len() - 1] != "log_kernel" {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: "not a draws file".into(),
        });
    }
    let mut parts: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| -> Result<&str> {
            record.get(c).ok_or_else(|| Error::Parse {
                row: r + 2,
                column: headers[c].to_string(),
                message: "missing field".into(),
            })
        };
        let num = |c: usize| -> Result<f64> {
            let raw = field(c)?;
            raw.parse().map_err(|_| Error::Parse {
                row: r + 2,
                column: headers[c].to_string(),
                message: format!("'{raw}' is not a number"),
            })
        };
        let chain: usize = field(0)?.parse().map_err(|_| Error::Parse {
            row: r + 2,
            column: "chain".into(),
            message: "bad chain index".into(),
        })?;
        if chain >= parts.len() {
            parts.resize(chain + 1, (Vec::new(), Vec::new()));
        }
        for c in 0..d {
            let v = num(2 + c)?;
            parts[chain].0.push(v);
        }
        let lk = num(2 + d)?;
        parts[chain].1.push(lk);
    }
    parts
        .into_iter()
        .map(|(draws, lk)| Chain::from_parts(d, draws, lk, 0))
        .collect()
}

/// Flat `name.key = value` lines per coordinate.
pub fn summary_text(summary: &PosteriorSummary, names: &[String], extra: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "alpha = {}", summary.alpha);
    for (i, name) in names.iter().enumerate() {
        let (lo, hi) = summary.credible_intervals[i];
        let _ = writeln!(s, "{name}.map = {}", summary.map[i]);
        let _ = writeln!(s, "{name}.mean = {}", summary.mean[i]);
        let _ = writeln!(s, "{name}.sd = {}", summary.sd[i]);
        let _ = writeln!(s, "{name}.ci_low = {lo}");
        let _ = writeln!(s, "{name}.ci_high = {hi}");
        let _ = writeln!(s, "{name}.ess = {}", summary.ess[i]);
        let _ = writeln!(s, "{name}.rhat = {}", summary.rhat[i]);
    }
    s
}

/// Density histogram of pooled draws of coordinate `c` with `bins` equal
/// bins: `bin_left,bin_right,density`.
pub fn histogram_csv(chains: &[Chain], c: usize, bins: usize) -> String {
    let values: Vec<f64> = chains.iter().flat_map(|ch| ch.column(c)).collect();
    let mut s = String::from("bin_left,bin_right,density\n");
    if values.is_empty() || bins == 0 {
        return s;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in &values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64;
    for (b, n) in counts.iter().enumerate() {
        let left = lo + b as f64 * width;
        let _ = writeln!(s, "{left},{},{}", left + width, *n as f64 / (total * width));
    }
    s
}

/// Writes draws.csv, summary.txt and hist_<i>.csv into `dir`.
pub fn write_outputs(
    dir: &Path,
    chains: &[Chain],
    summary: &PosteriorSummary,
    names: &[String],
    extra: &[(String, String)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("draws.csv"), draws_csv(chains).as_bytes())?;
    write_atomic(&dir.join("summary.txt"), summary_text(summary, names, extra).as_bytes())?;
    for i in 0..names.len() {
        write_atomic(
            &dir.join(format!("hist_{i}.csv")),
            histogram_csv(chains, i, 50).as_bytes(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_normalization() {
        assert_eq!(normalize_header("\"fixed acidity\""), "fixed.acidity");
        assert_eq!(normalize_header(" pH "), "pH");
        assert_eq!(normalize_header("free sulfur  dioxide"), "free.sulfur.dioxide");
    }

    #[test]
    fn delimiter_sniffing() {
        assert_eq!(sniff_delimiter("\"a\";\"b\";\"c\""), b';');
        assert_eq!(sniff_delimiter("a,b,c"), b',');
    }

    #[test]
    fn draws_round_trip() {
        let a = Chain::from_parts(2, vec![0.1, -2.5e-17, 3.0, 1e300], vec![-1.0 / 3.0, 7.0], 0).unwrap();
        let b = Chain::from_parts(2, vec![f64::MIN_POSITIVE, 2.0], vec![0.0], 0).unwrap();
        let text = draws_csv(&[a.clone(), b.clone()]);
        assert!(text.starts_with("chain,iter,theta_0,theta_1,log_kernel\n"));
        let back = parse_draws_csv(&text).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let c = Chain::from_parts(1, (0..1000).map(|i| (i as f64).sqrt()).collect(), vec![0.0; 1000], 0).unwrap();
        let text = histogram_csv(&[c], 0, 20);
        let total: f64 = text
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[1] - v[0]) * v[2]
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
