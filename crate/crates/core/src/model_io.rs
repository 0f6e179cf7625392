//! Binary model files.
//!
//! All integers are unsigned little-endian, all reals little-endian IEEE-754
//! binary64.
//!
//! ```text
//! magic      8 bytes   "GLRLMDL\0"
//! version    u8        1
//! flags      u8        bit 0: coefficient history, bit 1: id tables
//! m, n, K    u64 × 3
//! terms      K × (θ: f64, u: m × f64, v: n × f64)
//! [history]  H: u64, then H × (len: u64, len × f64)
//! [ids]      row table then column table, each
//!            count: u64, then count × (len: u32, len bytes of UTF-8)
//! ```
//!
//! History entry `t − 1` holds the coefficients of the iterate after
//! iteration `t`, applied to the first `len` terms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::IdMap;
use crate::error::{Error, Result};
use crate::sparse::LowRankModel;

pub const MAGIC: [u8; 8] = *b"GLRLMDL\0";
pub const VERSION: u8 = 1;

const FLAG_HISTORY: u8 = 1;
const FLAG_IDS: u8 = 2;

/// A model plus optional reconstruction and id-mapping data.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: LowRankModel,
    pub history: Option<Vec<Vec<f64>>>,
    pub ids: Option<(IdMap, IdMap)>,
}

impl SavedModel {
    pub fn new(model: LowRankModel) -> Self {
        SavedModel {
            model,
            history: None,
            ids: None,
        }
    }
}

fn put_u64<W: Write>(w: &mut W, x: u64) -> Result<()> {
    Ok(w.write_all(&x.to_le_bytes())?)
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model<W: Write>(w: &mut W, saved: &SavedModel) -> Result<()> {
    let m = &saved.model;
    w.write_all(&MAGIC)?;
    let mut flags = 0;
    if saved.history.is_some() {
        flags |= FLAG_HISTORY;
    }
    if saved.ids.is_some() {
        flags |= FLAG_IDS;
    }
    w.write_all(&[VERSION, flags])?;
    put_u64(w, m.rows() as u64)?;
    put_u64(w, m.cols() as u64)?;
    put_u64(w, m.len() as u64)?;
    for term in m.terms() {
        put_f64s(w, &[term.theta])?;
        put_f64s(w, &term.u)?;
        put_f64s(w, &term.v)?;
    }
    if let Some(history) = &saved.history {
        put_u64(w, history.len() as u64)?;
        for theta in history {
            put_u64(w, theta.len() as u64)?;
            put_f64s(w, theta)?;
        }
    }
    if let Some((rows, cols)) = &saved.ids {
        for table in [rows, cols] {
            put_u64(w, table.len() as u64)?;
            for id in table.raw_ids() {
                let len = u32::try_from(id.len())
                    .map_err(|_| Error::ModelFormat("id longer than 4 GiB".into()))?;
                w.write_all(&len.to_le_bytes())?;
                w.write_all(id.as_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::ModelFormat(format!("truncated while reading {what}"))
                }
                _ => Error::Io(e),
            })?;
        Ok(buf)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let x = self.u64(what)?;
        usize::try_from(x).map_err(|_| Error::ModelFormat(format!("{what} {x} too large")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        // grow as data arrives so a corrupt length cannot force a huge allocation
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            out.push(f64::from_le_bytes(self.bytes(what)?));
        }
        Ok(out)
    }

    fn ids(&mut self, expected: usize, what: &str) -> Result<IdMap> {
        let count = self.len(what)?;
        if count != expected {
            return Err(Error::ModelFormat(format!(
                "{what}: {count} ids for dimension {expected}"
            )));
        }
        let mut map = IdMap::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(self.bytes(what)?) as usize;
            let mut buf = Vec::with_capacity(len.min(1 << 16));
            (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
            if buf.len() != len {
                return Err(Error::ModelFormat(format!(
                    "truncated while reading {what}"
                )));
            }
            let id = String::from_utf8(buf)
                .map_err(|_| Error::ModelFormat(format!("{what}: invalid UTF-8")))?;
            if map.get(&id).is_some() {
                return Err(Error::ModelFormat(format!("{what}: duplicate id {id:?}")));
            }
            map.intern(&id);
        }
        Ok(map)
    }
}

pub fn read_model<R: Read>(r: R) -> Result<SavedModel> {
    let mut r = Reader { inner: r };
    if r.bytes::<8>("magic")? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let [version, flags] = r.bytes::<2>("header")?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    if flags & !(FLAG_HISTORY | FLAG_IDS) != 0 {
        return Err(Error::ModelFormat(format!("unknown flags {flags:#04x}")));
    }
    let rows = r.len("rows")?;
    let cols = r.len("cols")?;
    let k = r.len("term count")?;
    if rows == 0 || cols == 0 {
        return Err(Error::ModelFormat(format!("dimensions {rows}x{cols}")));
    }
    let mut model = LowRankModel::zeros(rows, cols);
    for t in 0..k {
        let what = format!("term {t}");
        let theta = r.f64s(1, &what)?[0];
        let u = r.f64s(rows, &what)?;
        let v = r.f64s(cols, &what)?;
        model
            .push(theta, u, v)
            .map_err(|e| Error::ModelFormat(format!("{what}: {e}")))?;
    }
    let history = if flags & FLAG_HISTORY != 0 {
        let h = r.len("history length")?;
        let mut out = Vec::with_capacity(h.min(1 << 16));
        for t in 0..h {
            let len = r.len("history entry")?;
            if len > k {
                return Err(Error::ModelFormat(format!(
                    "history entry {t} has {len} > {k} coefficients"
                )));
            }
            out.push(r.f64s(len, "history")?);
        }
        Some(out)
    } else {
        None
    };
    let ids = if flags & FLAG_IDS != 0 {
        Some((r.ids(rows, "row ids")?, r.ids(cols, "column ids")?))
    } else {
        None
    };
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok(SavedModel {
        model,
        history,
        ids,
    })
}

pub fn save(path: &Path, saved: &SavedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, saved)
}

pub fn load(path: &Path) -> Result<SavedModel> {
    read_model(BufReader::new(File::open(path)?))
}
