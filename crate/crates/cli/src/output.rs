use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

/// JSON formatter writing every float with 17 significant digits.
struct SigFormatter;

impl serde_json::ser::Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{}", sig(v))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{}", sig(v as f64))
    }
}

/// Float text with 17 significant digits; round-trips exactly.
pub fn sig(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Failure::Io(format!("cannot encode JSON: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A CSV table: header plus rows of already formatted cells.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: vec![],
        }
    }

    pub fn push_floats(&mut self, row: impl IntoIterator<Item = f64>) {
        self.rows.push(row.into_iter().map(sig).collect());
    }

    fn to_bytes(&self) -> Result<Vec<u8>, Failure> {
        let mut w = csv::Writer::from_writer(vec![]);
        let io = |e: csv::Error| Failure::Io(format!("cannot encode CSV: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Failure::Io(format!("cannot encode CSV: {e}")))
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct OutputArgs {
    /// Output file; the document goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; defaults to csv for a `.csv` file and json otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl OutputArgs {
    pub fn format(&self) -> Format {
        self.format.unwrap_or_else(|| match self.out.as_deref().and_then(Path::extension) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        })
    }

    /// Writes the document and prints the one-line summary.
    pub fn emit<T: Serialize>(&self, doc: &T, table: Option<Table>, summary: &str) -> Result<(), Failure> {
        let bytes = match (self.format(), table) {
            (Format::Json, _) => to_json(doc)?,
            (Format::Csv, Some(t)) => t.to_bytes()?,
            (Format::Csv, None) => return Err(Failure::Usage("this command has no CSV output".into())),
        };
        match &self.out {
            Some(path) => {
                let mut f = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                f.write_all(&bytes)
                    .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                println!("{summary} -> {}", path.display());
            }
            None => {
                io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| Failure::Io(format!("stdout: {e}")))?;
                eprintln!("{summary}");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [1.0, -0.6, 0.1 + 0.2, 1e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = sig(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        let json = String::from_utf8(to_json(&vec![0.5, 2.0]).unwrap()).unwrap();
        assert_eq!(json, "[5.0000000000000000e-1,2.0000000000000000e0]\n");
    }

    #[test]
    fn csv_has_header() {
        let mut t = Table::new(["r", "L"]);
        t.push_floats([1.0, 2.0]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "r,L\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
