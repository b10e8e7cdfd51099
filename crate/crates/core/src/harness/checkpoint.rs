//! Binary checkpoints for learned query banks.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "CROPPLC\0"
//! version  u32      1
//! dim      u32
//! n_ctx    u32      contextual query count
//! n_non    u32      non-contextual query count
//! anchor   u32      anchor token count
//! data     f64 × (n_ctx + n_non) · dim, contextual bank first, row-major
//! ```

use std::io::{Read, Write};

use super::HarnessError;
use crate::plc::PlcParams;
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"CROPPLC\0";
pub const VERSION: u32 = 1;

pub fn write_params<W: Write>(mut w: W, params: &PlcParams) -> std::io::Result<()> {
    let c = params.config();
    w.write_all(MAGIC)?;
    for v in [VERSION, params.dim() as u32, c.contextual_queries as u32, c.noncontextual_queries as u32, c.anchor_tokens as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for m in [params.q_contextual(), params.q_noncontextual()] {
        for x in m.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<PlcParams, HarnessError> {
    let bad = |m: String| HarnessError::Data(format!("checkpoint: {m}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut u32s = [0u32; 5];
    for v in &mut u32s {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| bad(e.to_string()))?;
        *v = u32::from_le_bytes(b);
    }
    let [version, dim, n_ctx, n_non, anchor] = u32s.map(|v| v as usize);
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut read_matrix = |rows: usize| -> Result<Matrix, HarnessError> {
        let mut data = vec![0.0; rows * dim];
        let mut b = [0u8; 8];
        for x in &mut data {
            r.read_exact(&mut b).map_err(|e| bad(format!("truncated data: {e}")))?;
            *x = f64::from_le_bytes(b);
        }
        Matrix::from_vec(rows, dim, data).map_err(|e| bad(e.to_string()))
    };
    let q_ctx = read_matrix(n_ctx)?;
    let q_non = read_matrix(n_non)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| bad(e.to_string()))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(PlcParams::new(q_ctx, q_non, anchor)?)
}

pub fn save(path: &std::path::Path, params: &PlcParams) -> Result<(), HarnessError> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_params(&mut w, params).map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn load(path: &std::path::Path) -> Result<PlcParams, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_params(std::io::BufReader::new(f))
}
