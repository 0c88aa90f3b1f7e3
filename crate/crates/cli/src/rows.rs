//! Result rows and the CSV file layout.
//!
//! A results file is a block of `# key: value` comment lines followed by a
//! CSV table whose columns are exactly [`COLUMNS`]. Floats are written with
//! 17 significant digits so that reading them back is bit-exact; fields that
//! do not apply to a model are left empty.

use crate::config::SCHEMA_VERSION;
use crate::error::{CliError, CliResult};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const COLUMNS: [&str; 16] = [
    "model",
    "N",
    "eps_or_lambda",
    "S",
    "Phi_ext",
    "Phi_q",
    "Pi_ext",
    "Pi_u",
    "Pi_d",
    "gap",
    "alpha_re",
    "alpha_im",
    "beta",
    "residual",
    "n_max_used",
    "wall_time_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub size: usize,
    pub eps_or_lambda: f64,
    pub s: f64,
    pub phi_ext: f64,
    pub phi_q: f64,
    pub pi_ext: f64,
    pub pi_u: f64,
    pub pi_d: f64,
    pub gap: Option<f64>,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta: Option<f64>,
    pub residual: f64,
    pub n_max_used: Option<usize>,
    pub wall_time_s: Option<f64>,
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

impl ResultRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.size.to_string(),
            fmt_f64(self.eps_or_lambda),
            fmt_f64(self.s),
            fmt_f64(self.phi_ext),
            fmt_f64(self.phi_q),
            fmt_f64(self.pi_ext),
            fmt_f64(self.pi_u),
            fmt_f64(self.pi_d),
            opt(self.gap, fmt_f64),
            fmt_f64(self.alpha_re),
            fmt_f64(self.alpha_im),
            opt(self.beta, fmt_f64),
            fmt_f64(self.residual),
            opt(self.n_max_used, |n| n.to_string()),
            opt(self.wall_time_s, fmt_f64),
        ]
    }

    /// Name of the first non-finite numeric field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        let vals = [
            self.eps_or_lambda,
            self.s,
            self.phi_ext,
            self.phi_q,
            self.pi_ext,
            self.pi_u,
            self.pi_d,
            self.gap.unwrap_or(0.0),
            self.alpha_re,
            self.alpha_im,
            self.beta.unwrap_or(0.0),
            self.residual,
            self.wall_time_s.unwrap_or(0.0),
        ];
        let names = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 15];
        vals.iter().zip(names).find(|(v, _)| !v.is_finite()).map(|(_, i)| COLUMNS[i])
    }

    pub fn from_record(rec: &csv::StringRecord) -> CliResult<Self> {
        if rec.len() != COLUMNS.len() {
            return Err(CliError::Input(format!("row has {} fields, schema has {}", rec.len(), COLUMNS.len())));
        }
        let f = |i: usize| -> CliResult<f64> {
            rec[i].parse().map_err(|_| CliError::Input(format!("column {}: cannot parse {:?}", COLUMNS[i], &rec[i])))
        };
        let of = |i: usize| -> CliResult<Option<f64>> { if rec[i].is_empty() { Ok(None) } else { f(i).map(Some) } };
        let u = |i: usize| -> CliResult<usize> {
            rec[i].parse().map_err(|_| CliError::Input(format!("column {}: cannot parse {:?}", COLUMNS[i], &rec[i])))
        };
        Ok(ResultRow {
            model: rec[0].to_string(),
            size: u(1)?,
            eps_or_lambda: f(2)?,
            s: f(3)?,
            phi_ext: f(4)?,
            phi_q: f(5)?,
            pi_ext: f(6)?,
            pi_u: f(7)?,
            pi_d: f(8)?,
            gap: of(9)?,
            alpha_re: f(10)?,
            alpha_im: f(11)?,
            beta: of(12)?,
            residual: f(13)?,
            n_max_used: if rec[14].is_empty() { None } else { Some(u(14)?) },
            wall_time_s: of(15)?,
        })
    }
}

/// Comment header of a results file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Header {
    pub entries: BTreeMap<String, String>,
}

impl Header {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> CliResult<f64> {
        let v = self.get(key).ok_or_else(|| CliError::Input(format!("header has no `{key}` entry")))?;
        v.trim().parse().map_err(|_| CliError::Input(format!("header `{key}` is not a number: {v:?}")))
    }

    /// `key=value` pairs from the `params` entry.
    pub fn param(&self, key: &str) -> Option<f64> {
        self.get("params")?.split_whitespace().find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            if k == key {
                v.parse().ok()
            } else {
                None
            }
        })
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

pub fn write_column_line(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", COLUMNS.join(","))
}

pub fn write_row(w: &mut impl Write, row: &ResultRow) -> std::io::Result<()> {
    let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    cw.write_record(row.fields()).map_err(std::io::Error::other)?;
    let bytes = cw.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    w.write_all(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub header: Header,
    pub rows: Vec<ResultRow>,
}

impl ResultsFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut header = Header::default();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').split_once(':') {
                header.entries.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        match header.get("schema_version") {
            Some(v) if v == SCHEMA_VERSION.to_string() => {}
            Some(v) => return Err(CliError::Input(format!("schema_version {v} is not {SCHEMA_VERSION}"))),
            None => return Err(CliError::Input("missing `# schema_version` header".into())),
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(text.as_bytes());
        let cols = rdr.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
        if cols.iter().ne(COLUMNS.iter().copied()) {
            return Err(CliError::Input(format!("column line {:?} does not match the schema", cols.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(ResultRow::from_record(&rec.map_err(|e| CliError::Input(e.to_string()))?)?);
        }
        Ok(ResultsFile { header, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: f64) -> ResultRow {
        ResultRow {
            model: "kerr".into(),
            size: 10,
            eps_or_lambda: x,
            s: 1.0 / 3.0,
            phi_ext: 2.0f64.sqrt(),
            phi_q: 1e-300,
            pi_ext: std::f64::consts::PI,
            pi_u: -0.1,
            pi_d: 5e-324,
            gap: Some(1.2345678901234567e-7),
            alpha_re: -0.0,
            alpha_im: 0.7,
            beta: None,
            residual: 3e-13,
            n_max_used: Some(42),
            wall_time_s: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut h = Header::default();
        h.entries.insert("schema_version".into(), SCHEMA_VERSION.to_string());
        let mut buf = Vec::new();
        h.write(&mut buf).unwrap();
        write_column_line(&mut buf).unwrap();
        let rows: Vec<_> = [0.1, 0.2 + 0.1, 1.0 - 1e-16].iter().map(|x| row(*x)).collect();
        for r in &rows {
            write_row(&mut buf, r).unwrap();
        }
        buf.extend_from_slice(b"# failed N=3 eps=1: something\n");
        let f = ResultsFile::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(f.rows.len(), 3);
        for (a, b) in f.rows.iter().zip(&rows) {
            for (x, y) in a.fields().iter().zip(b.fields()) {
                assert_eq!(*x, y);
            }
            assert_eq!(a.eps_or_lambda.to_bits(), b.eps_or_lambda.to_bits());
            assert_eq!(a.alpha_re.to_bits(), b.alpha_re.to_bits());
        }
        assert_eq!(f.rows[0], rows[0]);
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.split('e').next().unwrap().replace('.', "").len(), 17);
    }

    #[test]
    fn schema_is_checked() {
        assert!(ResultsFile::parse("model,N\n").is_err());
        assert!(ResultsFile::parse("# schema_version: 2\nmodel\n").is_err());
        let bad = format!("# schema_version: {SCHEMA_VERSION}\nmodel,N,eps\n");
        assert!(matches!(ResultsFile::parse(&bad), Err(CliError::Input(_))));
    }

    #[test]
    fn detects_non_finite() {
        let mut r = row(1.0);
        assert_eq!(r.non_finite_field(), None);
        r.pi_u = f64::NAN;
        assert_eq!(r.non_finite_field(), Some("Pi_u"));
    }

    #[test]
    fn header_params() {
        let mut h = Header::default();
        h.entries.insert("params".into(), "kappa=1e0 gamma=1e-3".into());
        assert_eq!(h.param("gamma"), Some(1e-3));
        assert_eq!(h.param("omega"), None);
    }
}
