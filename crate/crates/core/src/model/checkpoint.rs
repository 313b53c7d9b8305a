//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "CANNERCK" | u32 version | u64 header_len | header JSON
//! u32 tensor_count
//! per tensor, sorted by name:
//!   u32 name_len | name | u32 ndim | u64 dims.. | f64 values..
//!   [f64 accum_sq_grad.. | f64 accum_sq_update..]   when header.optimizer_state
//! u64 FNV-1a of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabelSet, Model, ModelConfig};
use crate::corpus::Vocab;
use crate::numerics::Tensor;
use crate::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CANNERCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    labels: LabelSet,
    optimizer_state: bool,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Serializes `model`, optionally with its AdaDelta accumulators.
pub fn to_bytes(model: &Model, with_optimizer: bool) -> Result<Vec<u8>, Error> {
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        labels: model.labels.clone(),
        optimizer_state: with_optimizer,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;

    let mut params = BTreeMap::new();
    model.clone().visit_params(&mut |p| {
        params.insert(p.name().to_string(), p.clone());
    });

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    let put = |out: &mut Vec<u8>, t: &Tensor| {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, p) in &params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put(&mut out, &p.value);
        if with_optimizer {
            put(&mut out, &p.accum_sq_grad);
            put(&mut out, &p.accum_sq_update);
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize, Error> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("implausible {what} {n}")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, Error> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model, Error> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut r = Reader { bytes, pos: CHECKPOINT_MAGIC.len() };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    if bytes.len() < 8 {
        return Err(Error::CorruptCheckpoint("truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let header_len = r.len("header length")?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }

    let mut stored = BTreeMap::new();
    let count = r.u32()?;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.len("dimension")).collect::<Result<Vec<_>, _>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::CorruptCheckpoint(format!("`{name}` has implausible shape")))?;
        let to_tensor = |data| Tensor::from_vec(&dims, data).map_err(|e| Error::CorruptCheckpoint(format!("`{name}`: {e}")));
        let value = to_tensor(r.f64s(n)?)?;
        let optim = if header.optimizer_state {
            Some((to_tensor(r.f64s(n)?)?, to_tensor(r.f64s(n)?)?))
        } else {
            None
        };
        stored.insert(name, (value, optim));
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes after tensors".into()));
    }

    let vocab_len = header.vocab.len();
    let n_labels = header.labels.len();
    let mut model = Model::new(header.config, header.vocab, header.labels)
        .map_err(|e| Error::InconsistentCheckpoint(format!("config: {e}")))?;
    let mut problems = Vec::new();
    model.visit_params(&mut |p| match stored.remove(p.name()) {
        None => problems.push(format!("missing tensor `{}`", p.name())),
        Some((value, _)) if value.shape() != p.shape() => problems.push(format!(
            "`{}` has shape {:?}, expected {:?}",
            p.name(),
            value.shape(),
            p.shape()
        )),
        Some((value, optim)) => {
            p.value = value;
            if let Some((g, u)) = optim {
                p.accum_sq_grad = g;
                p.accum_sq_update = u;
            }
        }
    });
    problems.extend(stored.keys().map(|k| format!("unexpected tensor `{k}`")));
    if !problems.is_empty() {
        return Err(Error::InconsistentCheckpoint(format!(
            "{} (vocab {vocab_len} entries, {n_labels} labels)",
            problems.join("; ")
        )));
    }
    Ok(model)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Io(path.display().to_string(), e);
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn save(model: &Model, path: &Path) -> Result<(), Error> {
    write_atomic(path, &to_bytes(model, false)?)
}

/// Like [`save`], also storing the AdaDelta accumulators.
pub fn save_with_optimizer(model: &Model, path: &Path) -> Result<(), Error> {
    write_atomic(path, &to_bytes(model, true)?)
}

pub fn load(path: &Path) -> Result<Model, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, gen_synthetic};

    fn model(d_h: usize) -> (Model, Vec<crate::Sentence>) {
        let corpus = gen_synthetic(5, 10);
        let config = ModelConfig { d_ch: 6, d_h, k: 3, ..Default::default() };
        (Model::new(config, build_vocab(&corpus, 1), LabelSet::from_corpus(&corpus)).unwrap(), corpus)
    }

    #[test]
    fn round_trip_is_exact() {
        let (mut m, corpus) = model(32);
        m.batch_loss(&corpus[..3]).unwrap();
        let opt = m.config.optimizer();
        m.visit_params(&mut |p| opt.step(p).unwrap());
        for with_optimizer in [false, true] {
            let bytes = to_bytes(&m, with_optimizer).unwrap();
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(to_bytes(&back, with_optimizer).unwrap(), bytes);
            assert_eq!(back.config.d_h, 32);
            for s in &corpus {
                assert_eq!(back.forward(s).unwrap().0, m.forward(s).unwrap().0);
            }
        }
    }

    #[test]
    fn distinct_errors() {
        let (m, _) = model(8);
        let bytes = to_bytes(&m, false).unwrap();

        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(from_bytes(&v), Err(Error::CheckpointVersion { found: 9, .. })));

        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 20;
        flipped[last] ^= 1;
        assert!(matches!(from_bytes(&flipped), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn inconsistent_vocab_is_reported() {
        let (mut m, _) = model(8);
        // Header says one more character than the embedding table holds.
        let mut chars = m.vocab.chars().to_vec();
        chars.push('\u{4e00}');
        let bytes = to_bytes(&m, false).unwrap();
        m.vocab = Vocab::from_chars(chars).unwrap();
        let mut forged = to_bytes(&m, false).unwrap();
        // Reuse the tensors of the original.
        let header_end = |b: &[u8]| 20 + u64::from_le_bytes(b[12..20].try_into().unwrap()) as usize;
        let mut spliced = forged[..header_end(&forged)].to_vec();
        spliced.extend_from_slice(&bytes[header_end(&bytes)..bytes.len() - 8]);
        let sum = fnv1a(&spliced);
        spliced.extend_from_slice(&sum.to_le_bytes());
        forged = spliced;
        assert!(matches!(from_bytes(&forged), Err(Error::InconsistentCheckpoint(_))));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (m, _) = model(8);
        save(&m, &path).unwrap();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(load(&dir.path().join("nope")), Err(Error::Io(..))));
    }
}
