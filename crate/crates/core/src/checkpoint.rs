//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PKPT"  u32 version
//! str     architecture text
//! u32     tensor count, then per tensor: str name, u32 rank, u64 dims…, f64 data…
//! u32     mask layer count, then per layer: str id, u32 len, u8 state…
//! u64 epoch, f64 alpha, f64 lambda_h
//! u32     layer count, then per layer: str id, f64 rate, u32 n, u32 hard…, u32 n, u32 soft…
//! str     run configuration text
//! ```
//!
//! `str` is a u64 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::pruning::{FilterMask, FilterState, LayerMask, PruneState, Selection};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchSpec,
    pub weights: BTreeMap<String, Tensor>,
    pub mask: FilterMask,
    pub state: PruneState,
    pub config_text: String,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn indices(&mut self, v: &[usize]) {
        self.u32(v.len());
        v.iter().for_each(|&i| self.u32(i));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Checkpoint(format!("length {n} exceeds the file")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        (0..n).map(|_| self.u32()).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.str(&self.arch.to_text());

        w.u32(self.weights.len());
        for (name, t) in &self.weights {
            w.str(name);
            w.u32(t.shape().len());
            t.shape().iter().for_each(|&d| w.u64(d as u64));
            t.data().iter().for_each(|&v| w.f64(v));
        }

        w.u32(self.mask.layers.len());
        for lm in &self.mask.layers {
            w.str(&lm.layer);
            w.u32(lm.states.len());
            lm.states.iter().for_each(|s| w.u8(s.code()));
        }

        w.u64(self.state.epoch as u64);
        w.f64(self.state.alpha);
        w.f64(self.state.lambda_h);
        let ids: Vec<&String> = self
            .state
            .rates
            .keys()
            .chain(self.state.selections.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        w.u32(ids.len());
        let empty = Selection::default();
        for id in ids {
            w.str(id);
            w.f64(self.state.rates.get(id).copied().unwrap_or(0.0));
            let sel = self.state.selections.get(id).unwrap_or(&empty);
            w.indices(&sel.hard);
            w.indices(&sel.soft);
        }

        w.str(&self.config_text);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Checkpoint("bad magic (not a PKPT file)".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let arch = ArchSpec::from_text(&r.str()?)
            .map_err(|e| Error::Checkpoint(format!("architecture block: {e}")))?;

        let mut weights = BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let rank = r.u32()?;
            let shape: Vec<usize> = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<_>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.saturating_mul(8) <= buf.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            weights.insert(name, Tensor::from_vec(&shape, data)?);
        }

        let mut layers = Vec::new();
        for _ in 0..r.u32()? {
            let layer = r.str()?;
            let n = r.u32()?;
            let states = (0..n)
                .map(|_| {
                    let c = r.u8()?;
                    FilterState::from_code(c)
                        .ok_or_else(|| Error::Checkpoint(format!("bad filter state {c}")))
                })
                .collect::<Result<_>>()?;
            layers.push(LayerMask { layer, states });
        }

        let mut state = PruneState {
            epoch: r.u64()? as usize,
            alpha: r.f64()?,
            lambda_h: r.f64()?,
            ..PruneState::empty()
        };
        for _ in 0..r.u32()? {
            let id = r.str()?;
            state.rates.insert(id.clone(), r.f64()?);
            let hard = r.indices()?;
            let soft = r.indices()?;
            state.selections.insert(id, Selection { hard, soft });
        }
        let config_text = r.str()?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        Ok(Self {
            arch,
            weights,
            mask: FilterMask { layers },
            state,
            config_text,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
