//! Self-describing binary container for dense `f64` arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FSKC" | version u32 = 1 | header_len u64 | header JSON (UTF-8)
//!        | array 0 data | array 1 data | ...
//! ```
//!
//! The header is a JSON object whose `arrays` member lists
//! `{"name", "rows", "cols"}` in storage order; every other member is free
//! metadata. Array data is row-major binary64.

use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::problem::Problem;
use crate::synth::{GenSpec, PRNG_NAME};

pub const MAGIC: &[u8; 4] = b"FSKC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("header: {0}")]
    Header(String),
    #[error("array {0} missing")]
    MissingArray(String),
    #[error("instance: {0}")]
    Instance(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: Map<String, Value>,
    pub arrays: Vec<(String, Array2<f64>)>,
}

impl Container {
    pub fn new(meta: Map<String, Value>) -> Self {
        Container { meta, arrays: Vec::new() }
    }

    pub fn push(&mut self, name: &str, array: ArrayView2<'_, f64>) {
        self.arrays.push((name.to_string(), array.as_standard_layout().into_owned()));
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>, ContainerError> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| ContainerError::MissingArray(name.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ContainerError> {
        let mut header = self.meta.clone();
        let listing: Vec<Value> = self
            .arrays
            .iter()
            .map(|(name, a)| json!({"name": name, "rows": a.nrows(), "cols": a.ncols()}))
            .collect();
        header.insert("arrays".into(), Value::Array(listing));
        let header = serde_json::to_vec(&Value::Object(header)).map_err(|e| ContainerError::Header(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (_, a) in &self.arrays {
            for x in a.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Container, ContainerError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(ContainerError::Version(version));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let mut meta = match serde_json::from_slice::<Value>(&header) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(ContainerError::Header("header is not an object".into())),
            Err(e) => return Err(ContainerError::Header(e.to_string())),
        };
        let listing = match meta.remove("arrays") {
            Some(Value::Array(l)) => l,
            _ => return Err(ContainerError::Header("missing arrays listing".into())),
        };
        let mut arrays = Vec::with_capacity(listing.len());
        for entry in listing {
            let name = entry["name"].as_str().ok_or_else(|| ContainerError::Header("array name".into()))?;
            let rows = entry["rows"].as_u64().ok_or_else(|| ContainerError::Header("array rows".into()))? as usize;
            let cols = entry["cols"].as_u64().ok_or_else(|| ContainerError::Header("array cols".into()))? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let a = Array2::from_shape_vec((rows, cols), data).map_err(|e| ContainerError::Header(e.to_string()))?;
            arrays.push((name.to_string(), a));
        }
        Ok(Container { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<(), ContainerError> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Container, ContainerError> {
        Container::read_from(io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Packs an instance as arrays `a` (`n × 1`), `B` (`n × N`) and `C` (`n × n`).
pub fn instance_container(problem: &Problem<f64>, spec: Option<&GenSpec>) -> Container {
    let mut meta = Map::new();
    meta.insert("kind".into(), json!("instance"));
    meta.insert("n".into(), json!(problem.dim()));
    meta.insert("N".into(), json!(problem.num_targets()));
    meta.insert("epsilon".into(), json!(problem.epsilon()));
    if let Some(s) = spec {
        meta.insert("s".into(), json!(s.sparsity));
        meta.insert("class".into(), json!(s.cond_class.as_str()));
        meta.insert("c_hint".into(), json!(s.c_hint));
        meta.insert("seed".into(), json!(s.seed));
        meta.insert("prng".into(), json!(PRNG_NAME));
    }
    let mut c = Container::new(meta);
    let n = problem.dim();
    c.push("a", problem.source().view().into_shape_with_order((n, 1)).expect("column view"));
    c.push("B", problem.targets().view());
    c.push("C", problem.cost().view());
    c
}

pub fn instance_from_container(c: &Container) -> Result<Problem<f64>, ContainerError> {
    let eps = c
        .meta
        .get("epsilon")
        .and_then(Value::as_f64)
        .ok_or_else(|| ContainerError::Header("epsilon missing".into()))?;
    let a = c.get("a")?;
    let source = a.column(0).to_owned();
    Problem::new(c.get("C")?.clone(), source, c.get("B")?.clone(), eps)
        .map_err(|e| ContainerError::Instance(e.to_string()))
}
