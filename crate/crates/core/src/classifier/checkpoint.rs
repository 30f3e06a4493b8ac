//! `QFMP` model checkpoints.
//!
//! ```text
//! "QFMP" u16 version u32 d_v' u32 d_t' u32 d_f u32 d_k u32 C
//! { u32 rows, u32 cols, rows·cols x f64 }   ×10, row-major, TENSOR_NAMES order
//! ```
//!
//! The training configuration is stored next to the checkpoint as JSON in
//! `<path>.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::model::{ModelDims, ModelParams};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"QFMP";
pub const MODEL_VERSION: u16 = 1;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_params<W: Write>(params: &ModelParams, w: &mut W) -> Result<()> {
    let d = params.dims();
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    for x in [d.d_v, d.d_t, d.d_f, d.d_k, d.classes] {
        w.write_all(&(x as u32).to_le_bytes())?;
    }
    for ((rows, cols), t) in params.shapes().into_iter().zip(params.tensors()) {
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(t.len() * 8);
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::BadHeader("truncated checkpoint".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn decode_params<R: Read>(r: &mut R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadHeader("truncated checkpoint".into()))?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: MODEL_MAGIC,
            found: magic,
        });
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)
        .map_err(|_| Error::BadHeader("truncated checkpoint".into()))?;
    let version = u16::from_le_bytes(v);
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(r)? as usize;
    }
    let dims = ModelDims {
        d_v: dims[0],
        d_t: dims[1],
        d_f: dims[2],
        d_k: dims[3],
        classes: dims[4],
    };
    dims.validate()?;
    let mut params = ModelParams::zeros(dims);
    let shapes = params.shapes();
    for ((rows, cols), t) in shapes.into_iter().zip(params.tensors_mut()) {
        let (r_found, c_found) = (read_u32(r)? as usize, read_u32(r)? as usize);
        if (r_found, c_found) != (rows, cols) {
            return Err(Error::BadHeader(format!(
                "tensor shape {r_found}x{c_found}, expected {rows}x{cols}"
            )));
        }
        let mut buf = vec![0u8; t.len() * 8];
        r.read_exact(&mut buf)
            .map_err(|_| Error::BadHeader("truncated checkpoint".into()))?;
        for (x, c) in t.iter_mut().zip(buf.chunks_exact(8)) {
            *x = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
    }
    if !params.is_finite() {
        return Err(Error::BadHeader("checkpoint contains non-finite values".into()));
    }
    Ok(params)
}

pub fn save_model(path: impl AsRef<Path>, params: &ModelParams, cfg: &TrainConfig) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    encode_params(params, &mut w)?;
    w.flush()?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, TrainConfig)> {
    let path = path.as_ref();
    let params = decode_params(&mut BufReader::new(File::open(path)?))?;
    let cfg: TrainConfig = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    cfg.validate()?;
    if cfg.proj_dim != params.dims().d_f {
        return Err(Error::BadHeader(format!(
            "sidecar projection width {} does not match checkpoint {}",
            cfg.proj_dim,
            params.dims().d_f
        )));
    }
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::model::init_params;

    #[test]
    fn layout_and_round_trip() {
        let dims = ModelDims {
            d_v: 4,
            d_t: 6,
            d_f: 3,
            d_k: 2,
            classes: 2,
        };
        let p = init_params(dims, 8).unwrap();
        let mut buf = Vec::new();
        encode_params(&p, &mut buf).unwrap();
        let n_values = p.num_params();
        assert_eq!(buf.len(), 4 + 2 + 5 * 4 + 10 * 8 + 8 * n_values);
        assert_eq!(&buf[..4], b"QFMP");
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 4);
        assert_eq!(decode_params(&mut &buf[..]).unwrap(), p);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode_params(&mut &bad[..]), Err(Error::BadMagic { .. })));
        assert!(decode_params(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("out/model.qfmp")), PathBuf::from("out/model.qfmp.json"));
    }
}
