//! Binary tensor container.
//!
//! Layout (little-endian): magic `EGVW`, `u32` entry count, then per entry
//! `u16` name length, UTF-8 name, `u8` dtype (0 = f32), `u8` rank,
//! `u32` dims, raw payload.

use std::fs;
use std::path::Path;

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EGVW";
pub const DTYPE_F32: u8 = 0;

pub fn encode<'a, T: Real + 'a>(
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Result<Vec<u8>> {
    let entries: Vec<_> = entries.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len()).map_err(|_| {
            Error::Input(format!("tensor name too long: {} bytes", name_bytes.len()))
        })?;
        let rank = u8::try_from(t.shape().len()).map_err(|_| {
            Error::Input(format!(
                "tensor `{name}` rank {} exceeds 255",
                t.shape().len()
            ))
        })?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(DTYPE_F32);
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| Error::Input(format!("tensor `{name}` dim {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                self.path,
                self.pos as u64,
                format!("truncated {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(path, 0, "bad magic, expected EGVW"));
    }
    let count = r.u32("entry count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::parse(path, at as u64, "name is not UTF-8"))?
            .to_string();
        let at = r.pos;
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(Error::parse(
                path,
                at as u64,
                format!("unknown dtype tag {dtype}"),
            ));
        }
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let at = r.pos;
        let payload = r.take(numel * 4, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(&shape, data)
            .map_err(|e| Error::parse(path, at as u64, format!("tensor `{name}`: {e}")))?;
        out.push((name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(
            path,
            r.pos as u64,
            "trailing bytes after last entry",
        ));
    }
    Ok(out)
}

pub fn write_tensors<'a, T: Real + 'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Usage("empty output path".into()));
    }
    let bytes = encode(entries)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn save_params<T: Real>(path: &Path, params: &ParamStore<T>) -> Result<()> {
    write_tensors(path, params.iter())
}

pub fn load_params(path: &Path) -> Result<ParamStore<f32>> {
    let mut store = ParamStore::new();
    for (name, t) in read_tensors(path)? {
        store.insert(name, t);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_magic_and_dtype() {
        let t = Tensor::<f32>::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let mut bytes = encode([("a", &t)]).unwrap();
        let p = Path::new("mem");
        assert!(decode(&bytes, p).is_ok());
        bytes[4 + 4 + 2 + 1] = 7;
        let err = decode(&bytes, p).unwrap_err();
        assert!(err.to_string().contains("dtype"), "{err}");
        bytes[0] = b'X';
        assert!(decode(&bytes, p).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn truncation_reports_offset() {
        let t = Tensor::<f32>::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        let bytes = encode([("w", &t)]).unwrap();
        let err = decode(&bytes[..bytes.len() - 2], Path::new("ckpt")).unwrap_err();
        assert!(matches!(err, Error::Parse { offset, .. } if offset > 0));
    }
}
