//! Flat binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes  "PCPMLP\0\0"
//! version     u32      1
//! n_sizes     u32
//! sizes       n_sizes × u64
//! activation  u8       0 tanh, 1 silu
//! embedding   u8       0 none, 1 present
//!   n_freq      u64
//!   init        u8     0 log-uniform, 1 normal
//!   pass        u8
//!   freqs       n_freq·sizes[0] × f64
//! params      f64 in layer order: W₀ row-major, b₀, W₁, b₁, …
//! ```

use super::mlp::{Activation, EmbeddingSpec, FourierEmbedding, FrequencyInit, MlpModel};
use super::tensor::Tensor;
use super::NeuralError;

const MAGIC: &[u8; 8] = b"PCPMLP\0\0";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layer_sizes.len() as u32).to_le_bytes());
    for &s in &model.layer_sizes {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    out.push(model.activation.id());
    match &model.embedding {
        None => out.push(0),
        Some(e) => {
            out.push(1);
            out.extend_from_slice(&(e.spec.n_freq as u64).to_le_bytes());
            out.push(match e.spec.init {
                FrequencyInit::LogUniform => 0,
                FrequencyInit::Normal => 1,
            });
            out.push(e.spec.pass_through as u8);
            for f in &e.freqs {
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
    }
    for p in &model.params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end =
            end.ok_or_else(|| NeuralError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NeuralError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NeuralError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| NeuralError::Checkpoint("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<MlpModel, NeuralError> {
    let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("not a parameter checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let n_sizes = r.u32()? as usize;
    if !(3..=64).contains(&n_sizes) {
        return Err(bad("implausible layer count"));
    }
    let sizes = (0..n_sizes)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.iter().any(|&s| s == 0 || s > 1 << 20) {
        return Err(bad("implausible layer size"));
    }
    let activation = Activation::from_id(r.u8()?).ok_or_else(|| bad("unknown activation id"))?;
    let embedding = match r.u8()? {
        0 => None,
        1 => {
            let n_freq = r.u64()? as usize;
            let init = match r.u8()? {
                0 => FrequencyInit::LogUniform,
                1 => FrequencyInit::Normal,
                _ => return Err(bad("unknown frequency init")),
            };
            let pass_through = r.u8()? != 0;
            let freqs = r.f64s(
                n_freq
                    .checked_mul(sizes[0])
                    .ok_or_else(|| bad("size overflow"))?,
            )?;
            Some(FourierEmbedding {
                spec: EmbeddingSpec {
                    n_freq,
                    init,
                    pass_through,
                },
                input_dim: sizes[0],
                freqs,
            })
        }
        _ => return Err(bad("bad embedding flag")),
    };
    let mut fan_in = embedding
        .as_ref()
        .map_or(sizes[0], FourierEmbedding::output_dim);
    let mut params = Vec::new();
    for &fan_out in &sizes[1..] {
        params.push(Tensor::matrix(fan_in, fan_out, r.f64s(fan_in * fan_out)?)?);
        params.push(Tensor::matrix(1, fan_out, r.f64s(fan_out)?)?);
        fan_in = fan_out;
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(MlpModel {
        layer_sizes: sizes,
        activation,
        embedding,
        params,
    })
}
