use std::path::Path;

use dacs::FeatureMatrix;

use crate::{read_file, read_text, usage, CliResult};

pub const MAGIC: &[u8; 8] = b"DACSEMB1";
/// Magic, n, d and the flag byte.
pub const HEADER_LEN: usize = 8 + 8 + 8 + 1;
const FLAG_UNIT_NORM: u8 = 1;

/// Embeddings as stored on disk: row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub n: usize,
    pub d: usize,
    pub unit_norm: bool,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Binary,
    Csv,
}

impl EmbeddingFile {
    /// Narrow a matrix to `f32`. The unit-norm flag is copied from the matrix.
    pub fn from_matrix(x: &FeatureMatrix) -> Self {
        EmbeddingFile {
            n: x.n(),
            d: x.d(),
            unit_norm: x.is_unit_norm(),
            data: x.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> CliResult<FeatureMatrix> {
        let data = self.data.iter().map(|&v| f64::from(v)).collect();
        let x = FeatureMatrix::new(self.n, self.d, data)?;
        if self.unit_norm && !x.is_unit_norm() {
            return Err(usage("header flags the embeddings as unit-norm but some rows are not"));
        }
        Ok(x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        out.push(if self.unit_norm { FLAG_UNIT_NORM } else { 0 });
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(usage(format!(
                "embedding header truncated: expected {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(usage("bad magic at byte offset 0: not a DACSEMB1 file"));
        }
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
        let (n, d) = (word(8), word(16));
        let flags = bytes[24];
        if flags & !FLAG_UNIT_NORM != 0 {
            return Err(usage(format!("unknown flag bits {flags:#04x} at byte offset 24")));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| usage(format!("header dimensions {n}x{d} overflow")))?;
        let actual = bytes.len() - HEADER_LEN;
        if actual != expected {
            return Err(usage(format!(
                "payload size mismatch after byte offset {HEADER_LEN}: expected {expected} bytes for {n}x{d} f32, got {actual}"
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Ok(EmbeddingFile {
            n: n as usize,
            d: d as usize,
            unit_norm: flags & FLAG_UNIT_NORM != 0,
            data,
        })
    }

    /// Parse CSV with a `f0,...,f{d-1}` header row.
    pub fn from_csv(text: &str) -> CliResult<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| usage("empty CSV: missing header row"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        for (j, c) in cols.iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(usage(format!("line 1: header column {j} is '{c}', expected 'f{j}'")));
            }
        }
        let d = cols.len();
        let mut data = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d {
                return Err(usage(format!("line {}: expected {d} fields, got {}", i + 1, fields.len())));
            }
            for f in fields {
                let v: f32 = f
                    .parse()
                    .map_err(|_| usage(format!("line {}: cannot parse '{f}' as a number", i + 1)))?;
                data.push(v);
            }
        }
        let n = data.len() / d;
        let mut file = EmbeddingFile {
            n,
            d,
            unit_norm: false,
            data,
        };
        file.unit_norm = file.to_matrix()?.is_unit_norm();
        Ok(file)
    }

    pub fn to_csv(&self) -> String {
        let mut out = (0..self.d).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in self.data.chunks(self.d.max(1)) {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn read_embeddings(path: &Path, format: Format) -> CliResult<FeatureMatrix> {
    let file = match format {
        Format::Binary => EmbeddingFile::from_bytes(&read_file(path)?),
        Format::Csv => EmbeddingFile::from_csv(&read_text(path)?),
    }
    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    file.to_matrix()
}
