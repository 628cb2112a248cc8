//! Model checkpoints.
//!
//! Layout: the four bytes `FGMK`, a little-endian `u64` header length, a UTF-8 JSON
//! header, then one FGM1 record per tensor. The header names every tensor with its
//! shape and byte offset (relative to the first record) and carries the training
//! config, momentum coefficients and loss trace. Tensors are stored as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Ix1, Ix2};
use serde::{Deserialize, Serialize};

use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::fgm;
use crate::prototypes::PrototypeState;
use crate::training::{TrainConfig, TrainedModel};

pub const MAGIC: &[u8; 4] = b"FGMK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    pub beta1: f64,
    pub beta2: f64,
    pub config: TrainConfig,
    pub loss_trace: Vec<f64>,
}

const PROTOTYPE_GRAPH: &str = "prototype_graph";
const PROTOTYPE_MARGINAL: &str = "prototype_marginal";

fn as_matrix(t: ndarray::ArrayViewD<'_, f64>) -> Array2<f64> {
    match t.ndim() {
        1 => t
            .into_dimensionality::<Ix1>()
            .expect("checked")
            .insert_axis(Axis(0))
            .to_owned(),
        _ => t
            .into_dimensionality::<Ix2>()
            .expect("parameters are at most 2-D")
            .to_owned(),
    }
}

fn tensors(model: &TrainedModel) -> Vec<(String, Vec<usize>, Array2<f64>)> {
    let mut out: Vec<_> = ModelParams::TENSOR_NAMES
        .iter()
        .zip(model.params.tensors())
        .map(|(name, t)| (name.to_string(), t.shape().to_vec(), as_matrix(t)))
        .collect();
    let st = &model.proto_state;
    out.push((PROTOTYPE_GRAPH.into(), st.b.shape().to_vec(), st.b.clone()));
    out.push((
        PROTOTYPE_MARGINAL.into(),
        vec![st.nu.len()],
        st.nu.clone().insert_axis(Axis(0)),
    ));
    out
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &TrainedModel) -> Result<()> {
    let tensors = tensors(model);
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, shape, m) in &tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += fgm::encoded_len(m.nrows(), m.ncols()) as u64;
    }
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        tensors: entries,
        beta1: model.proto_state.beta1,
        beta2: model.proto_state.beta2,
        config: model.config.clone(),
        loss_trace: model.loss_trace.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for (_, _, m) in &tensors {
        fgm::write_matrix(&mut w, &m.view()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut r: R, what: &Path) -> Result<TrainedModel> {
    let fmt_err = |msg: String| Error::Format {
        path: what.to_path_buf(),
        msg,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| fmt_err(format!("reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(fmt_err(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|e| fmt_err(format!("reading header length: {e}")))?;
    let len = u64::from_le_bytes(len);
    let mut json = Vec::new();
    (&mut r)
        .take(len)
        .read_to_end(&mut json)
        .map_err(|e| fmt_err(format!("reading header: {e}")))?;
    if json.len() as u64 != len {
        return Err(fmt_err("truncated header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| fmt_err(format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(fmt_err(format!("unsupported version {}", header.version)));
    }

    let mut read = std::collections::HashMap::new();
    let mut offset = 0u64;
    for entry in &header.tensors {
        if entry.offset != offset {
            return Err(fmt_err(format!(
                "tensor {} at offset {}, expected {offset}",
                entry.name, entry.offset
            )));
        }
        let m = fgm::read_matrix(&mut r, what)?;
        let expected_rows = if entry.shape.len() == 1 {
            1
        } else {
            entry.shape[0]
        };
        let expected_cols = *entry.shape.last().unwrap_or(&0);
        if m.dim() != (expected_rows, expected_cols) || entry.shape.len() > 2 {
            return Err(fmt_err(format!(
                "tensor {} does not match shape {:?}",
                entry.name, entry.shape
            )));
        }
        offset += fgm::encoded_len(m.nrows(), m.ncols()) as u64;
        read.insert(entry.name.clone(), m);
    }
    let mut take = |name: &str| {
        read.remove(name)
            .ok_or_else(|| fmt_err(format!("missing tensor {name}")))
    };
    let vector = |m: Array2<f64>| m.row(0).to_owned();
    let params = ModelParams {
        gcn_weight: take("gcn_weight")?,
        gcn_bias: vector(take("gcn_bias")?),
        proj_weight1: take("proj_weight1")?,
        proj_bias1: vector(take("proj_bias1")?),
        proj_weight2: take("proj_weight2")?,
        proj_bias2: vector(take("proj_bias2")?),
        prototypes: take("prototypes")?,
    };
    let b = take(PROTOTYPE_GRAPH)?;
    let nu: Array1<f64> = vector(take(PROTOTYPE_MARGINAL)?);
    let dims = params.dims();
    let s = params.n_prototypes();
    let consistent = params.gcn_bias.len() == dims.d1
        && params.proj_weight1.nrows() == dims.d1
        && params.proj_bias1.len() == dims.d_h
        && params.proj_weight2.nrows() == dims.d_h
        && params.proj_bias2.len() == dims.d
        && params.prototypes.ncols() == dims.d
        && b.dim() == (s, s)
        && nu.len() == s;
    if !consistent {
        return Err(fmt_err("inconsistent tensor shapes".into()));
    }
    Ok(TrainedModel {
        params,
        proto_state: PrototypeState {
            b,
            nu,
            beta1: header.beta1,
            beta2: header.beta2,
        },
        config: header.config,
        loss_trace: header.loss_trace,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), model).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Dims;
    use crate::prototypes::init_state;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut proto = init_state(3, 0.9, 0.8).unwrap();
        proto.b[[0, 1]] = 0.25;
        proto.b[[1, 0]] = 0.25;
        TrainedModel {
            params: ModelParams::init(
                5,
                Dims {
                    d1: 4,
                    d_h: 3,
                    d: 2,
                },
                3,
                &mut rng,
            ),
            proto_state: proto,
            config: TrainConfig::default(),
            loss_trace: vec![1.5, 1.25, 0.75],
        }
    }

    #[test]
    fn round_trip_up_to_f32() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back = read_checkpoint(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.loss_trace, m.loss_trace);
        assert_eq!(back.proto_state.beta1, 0.9);
        for (a, b) in back.params.tensors().iter().zip(m.params.tensors()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(back.proto_state.b, m.proto_state.b);
        // a reloaded model re-serializes to the same bytes
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn offsets_point_at_records() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        let len = u64::from_le_bytes(buf[4..12].try_into().unwrap()) as usize;
        let header: CheckpointHeader = serde_json::from_slice(&buf[12..12 + len]).unwrap();
        let base = 12 + len;
        for e in &header.tensors {
            let at = base + e.offset as usize;
            assert_eq!(&buf[at..at + 4], fgm::MAGIC, "{}", e.name);
        }
        assert_eq!(header.tensors.len(), 9);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert!(read_checkpoint(&b"FGM1xxxx"[..], Path::new("mem")).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 3], Path::new("mem")).is_err());
        let mut bad = buf.clone();
        bad[14] = b'#';
        assert!(matches!(
            read_checkpoint(&bad[..], Path::new("mem")),
            Err(Error::Format { .. })
        ));
    }
}
