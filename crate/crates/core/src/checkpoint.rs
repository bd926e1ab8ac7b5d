//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `RADC`, version `u16`, then five sections in
//! fixed order, each `tag [u8; 4] | length u64 | payload`:
//!
//! * `SPEC` network spec as UTF-8 JSON
//! * `WGHT` `u32` layer count, per layer `u32 rows | u32 cols | rows·cols f64` row-major
//! * `DLAY` `u32` layer count, per layer `u8 present | u32 len | len f64` raw delays
//! * `OPTM` `u64` steps taken, then per layer the weight first/second moments,
//!   then per delayed layer the delay first/second moments, all `f64`
//! * `SEED` `u64` spec seed, `u64` completed epochs

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::delay::DelayState;
use crate::error::{RadError, Result};
use crate::network::{Network, NetworkSpec};
use crate::optim::{Moments, OptimizerState};
use crate::srm::SrmLayerParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RADC";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], payload: Vec<u8>) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
}

pub fn encode_checkpoint(net: &Network) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let spec = serde_json::to_vec(&net.spec)
        .map_err(|e| RadError::Checkpoint(format!("spec serialization: {e}")))?;
    section(&mut out, b"SPEC", spec);

    let mut w = Vec::new();
    w.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        let (rows, cols) = layer.weights.dim();
        w.extend_from_slice(&(rows as u32).to_le_bytes());
        w.extend_from_slice(&(cols as u32).to_le_bytes());
        put_f64s(&mut w, &layer.weights.iter().copied().collect::<Vec<_>>());
    }
    section(&mut out, b"WGHT", w);

    let mut d = Vec::new();
    d.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        match &layer.delay {
            Some(state) => {
                d.push(1);
                d.extend_from_slice(&(state.len() as u32).to_le_bytes());
                put_f64s(&mut d, state.raw());
            }
            None => d.push(0),
        }
    }
    section(&mut out, b"DLAY", d);

    let mut o = Vec::new();
    o.extend_from_slice(&net.optimizer.steps_taken.to_le_bytes());
    for m in &net.optimizer.weight_moments {
        put_f64s(&mut o, &m.first);
        put_f64s(&mut o, &m.second);
    }
    for m in net.optimizer.delay_moments.iter().flatten() {
        put_f64s(&mut o, &m.first);
        put_f64s(&mut o, &m.second);
    }
    section(&mut out, b"OPTM", o);

    let mut s = Vec::new();
    s.extend_from_slice(&net.spec.seed.to_le_bytes());
    s.extend_from_slice(&net.epochs_done.to_le_bytes());
    section(&mut out, b"SEED", s);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(RadError::Checkpoint(format!(
                "truncated {what} at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| RadError::Checkpoint("overflow".into()))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn section(&mut self, tag: &[u8; 4]) -> Result<Reader<'a>> {
        let found = self.take(4, "section tag")?;
        if found != tag {
            return Err(RadError::Checkpoint(format!(
                "expected section {:?}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let len = self.u64("section length")? as usize;
        Ok(Reader {
            bytes: self.take(len, "section payload")?,
            pos: 0,
        })
    }

    fn finish(&self, what: &str) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(RadError::Checkpoint(format!("{} trailing bytes in {what}", self.bytes.len() - self.pos)))
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut rd = Reader { bytes, pos: 0 };
    if rd.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(RadError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(rd.take(2, "version")?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(RadError::Checkpoint(format!("unsupported version {version}")));
    }

    let spec_sec = rd.section(b"SPEC")?;
    let spec: NetworkSpec = serde_json::from_slice(spec_sec.bytes)
        .map_err(|e| RadError::Checkpoint(format!("spec section: {e}")))?;
    spec.validate()?;

    let mut w = rd.section(b"WGHT")?;
    let n_layers = w.u32("layer count")? as usize;
    if n_layers + 1 != spec.layer_sizes.len() {
        return Err(RadError::shape("checkpoint layer count", spec.layer_sizes.len() - 1, n_layers));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let rows = w.u32("rows")? as usize;
        let cols = w.u32("cols")? as usize;
        if (rows, cols) != (spec.layer_sizes[l + 1], spec.layer_sizes[l]) {
            return Err(RadError::shape(
                "checkpoint weights",
                format!("{}x{}", spec.layer_sizes[l + 1], spec.layer_sizes[l]),
                format!("{rows}x{cols}"),
            ));
        }
        let values = w.f64s(rows * cols, "weights")?;
        let weights = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| RadError::Checkpoint(e.to_string()))?;
        layers.push(SrmLayerParams::new(weights));
    }
    w.finish("WGHT")?;

    let mut d = rd.section(b"DLAY")?;
    if d.u32("layer count")? as usize != n_layers {
        return Err(RadError::Checkpoint("delay section layer count mismatch".into()));
    }
    for layer in &mut layers {
        if d.u8("delay flag")? == 1 {
            let cap = spec
                .theta_d
                .ok_or_else(|| RadError::Checkpoint("delays present but spec has no theta_d".into()))?;
            let len = d.u32("delay length")? as usize;
            if len != layer.out_neurons() {
                return Err(RadError::shape("checkpoint delays", layer.out_neurons(), len));
            }
            layer.delay = Some(DelayState::from_raw(d.f64s(len, "delays")?, cap));
        }
    }
    d.finish("DLAY")?;

    let mut o = rd.section(b"OPTM")?;
    let mut optimizer = OptimizerState::new(spec.optimizer, &layers);
    optimizer.steps_taken = o.u64("steps taken")?;
    let mut read_moments = |m: &mut Moments| -> Result<()> {
        let n = m.first.len();
        m.first = o.f64s(n, "moments")?;
        m.second = o.f64s(n, "moments")?;
        Ok(())
    };
    for m in &mut optimizer.weight_moments {
        read_moments(m)?;
    }
    for m in optimizer.delay_moments.iter_mut().flatten() {
        read_moments(m)?;
    }
    o.finish("OPTM")?;

    let mut s = rd.section(b"SEED")?;
    let seed = s.u64("seed")?;
    let epochs_done = s.u64("epochs")?;
    s.finish("SEED")?;
    rd.finish("checkpoint")?;
    if seed != spec.seed {
        return Err(RadError::Checkpoint(format!("seed section {seed} disagrees with spec {}", spec.seed)));
    }
    Network::from_parts(spec, layers, Some(optimizer), epochs_done)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)?).map_err(|e| RadError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| RadError::io(path, e))?;
    decode_checkpoint(&bytes)
}
