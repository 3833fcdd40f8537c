//! Model checkpoints: every trainable tensor plus the settings and seed that
//! produced it, in one versioned binary file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "SONNCKPT"
//! version        u32
//! seed           u64
//! vocab hash     u64
//! config length  u32, then that many bytes of UTF-8 config text
//! tensor count   u32
//! per tensor:
//!   name length  u32, then that many bytes of UTF-8
//!   rank         u32, then rank dims as u64
//!   values       numel f64, row-major, IEEE-754 bit patterns
//! ```
//!
//! Files written by a different format version are refused outright rather
//! than half-read. `dump_text` renders the same content for eyeballing.

use crate::config::Config;
use crate::error::{Result, SonnetError};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SONNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub seed: u64,
    pub vocab_hash: u64,
    pub config: Config,
    pub params: ParamStore,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u64(&mut out, ckpt.seed);
    put_u64(&mut out, ckpt.vocab_hash);
    let cfg = ckpt.config.to_text();
    put_u32(&mut out, cfg.len() as u32);
    out.extend_from_slice(cfg.as_bytes());
    put_u32(&mut out, ckpt.params.len() as u32);
    for (name, t) in ckpt.params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u64(&mut out, d as u64);
        }
        for &v in &t.data {
            put_u64(&mut out, v.to_bits());
        }
    }
    std::fs::write(path, out).map_err(|e| SonnetError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(SonnetError::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| SonnetError::Checkpoint("non-UTF-8 text field".into()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(|e| SonnetError::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(SonnetError::Checkpoint(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(SonnetError::Checkpoint(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let seed = r.u64()?;
    let vocab_hash = r.u64()?;
    let cfg_len = r.u32()? as usize;
    let cfg_text = r.utf8(cfg_len)?;
    let config = Config::parse_text(&cfg_text, path)?;
    let n_tensors = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n_tensors {
        let name_len = r.u32()? as usize;
        let name = r.utf8(name_len)?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_bits(r.u64()?));
        }
        params.insert(name, Tensor::new(shape, data));
    }
    if r.pos != buf.len() {
        return Err(SonnetError::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            buf.len() - r.pos
        )));
    }
    Ok(Checkpoint { seed, vocab_hash, config, params })
}

/// Renders a checkpoint as text. With `full` each tensor's values follow its
/// header line, one row per line; otherwise only min/mean/max per tensor.
pub fn dump_text(ckpt: &Checkpoint, full: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("format version {FORMAT_VERSION}\n"));
    out.push_str(&format!("seed {}\n", ckpt.seed));
    out.push_str(&format!("vocab hash {:016x}\n", ckpt.vocab_hash));
    out.push_str(&format!(
        "tensors {} ({} values)\n",
        ckpt.params.len(),
        ckpt.params.total_values()
    ));
    out.push_str("config:\n");
    for line in ckpt.config.to_text().lines() {
        out.push_str(&format!("  {line}\n"));
    }
    for (name, t) in ckpt.params.iter() {
        let min = t.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = t.data.iter().sum::<f64>() / t.numel() as f64;
        out.push_str(&format!(
            "{name} {:?} min {min:.6} mean {mean:.6} max {max:.6}\n",
            t.shape
        ));
        if full {
            let cols = if t.shape.len() == 2 { t.shape[1] } else { t.numel() };
            for row in t.data.chunks(cols.max(1)) {
                let joined: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str("  ");
                out.push_str(&joined.join(" "));
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut params = ParamStore::new();
        params.insert("lm.dec.wx", Tensor::uniform(vec![8, 3], -0.7, 0.7, &mut rng));
        params.insert("pm.out.b", Tensor::zeros(vec![1]));
        params.insert(
            "shared.wemb",
            Tensor::uniform(vec![5, 4], -0.05, 0.05, &mut rng),
        );
        let mut config = Config::default();
        config.word_dim = 12;
        config.dropout = 0.15;
        Checkpoint {
            seed: 4242,
            vocab_hash: 0xdeadbeef01020304,
            config,
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.seed, ckpt.seed);
        assert_eq!(back.vocab_hash, ckpt.vocab_hash);
        assert_eq!(back.config.to_text(), ckpt.config.to_text());
        assert_eq!(back.params.len(), ckpt.params.len());
        for ((na, ta), (nb, tb)) in ckpt.params.iter().zip(back.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape, tb.shape);
            let same = ta
                .data
                .iter()
                .zip(&tb.data)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{na} changed across save/load");
        }
    }

    #[test]
    fn version_mismatch_is_a_clean_error() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("version 99"), "{msg}");
        assert!(msg.contains("reads 1"), "{msg}");
    }

    #[test]
    fn non_checkpoint_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, b"just some text, definitely not tensors").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("not a checkpoint"), "{err}");
    }

    #[test]
    fn truncated_file_rejected() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn dump_lists_header_and_every_tensor() {
        let ckpt = sample();
        let text = dump_text(&ckpt, false);
        assert!(text.contains("seed 4242"));
        assert!(text.contains("vocab hash deadbeef01020304"));
        assert!(text.contains("word_dim = 12"));
        assert!(text.contains("lm.dec.wx [8, 3]"));
        assert!(text.contains("pm.out.b [1]"));
        assert!(text.contains("shared.wemb [5, 4]"));
        assert!(!text.contains("\n  0 0 0"));

        let full = dump_text(&ckpt, true);
        let zeros_row = full
            .lines()
            .any(|l| l.trim() == "0");
        assert!(zeros_row, "full dump should print tensor values");
        // 8x3 matrix dumps 8 rows of 3 values
        let wx_rows = full
            .lines()
            .skip_while(|l| !l.starts_with("lm.dec.wx"))
            .skip(1)
            .take_while(|l| l.starts_with("  "))
            .count();
        assert_eq!(wx_rows, 8);
    }

    #[test]
    fn config_survives_the_trip() {
        let mut ckpt = sample();
        ckpt.config.gen_scheme = "ABBA".into();
        ckpt.config.epochs = 3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config.gen_scheme, "ABBA");
        assert_eq!(back.config.epochs, 3);
    }
}
