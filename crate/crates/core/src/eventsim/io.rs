//! `EVT1` binary and CSV event files.
//!
//! Binary layout (little-endian): magic `EVT1`, `u32` width, `u32` height,
//! `u64` t_start_us, `u64` t_end_us, `u64` count, then `count` 16-byte records
//! `{u64 t_us, u16 x, u16 y, i8 p, 3 pad bytes}`.

use std::fs;
use std::path::Path;

use super::stream::{Event, EventStream};
use crate::error::{Error, Result};

pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8;
const RECORD_LEN: usize = 16;

pub fn encode_evt1(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(EVT1_MAGIC);
    out.extend_from_slice(&(stream.width() as u32).to_le_bytes());
    out.extend_from_slice(&(stream.height() as u32).to_le_bytes());
    out.extend_from_slice(&stream.t_start().to_le_bytes());
    out.extend_from_slice(&stream.t_end().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    out
}

pub fn decode_evt1(bytes: &[u8], path: &Path) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(
            path,
            bytes.len() as u64,
            "truncated EVT1 header",
        ));
    }
    if &bytes[..4] != EVT1_MAGIC {
        return Err(Error::parse(path, 0, "bad magic, expected EVT1"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (width, height) = (u32_at(4) as usize, u32_at(8) as usize);
    let (t_start, t_end, count) = (u64_at(12), u64_at(20), u64_at(28));
    let expected = (count as usize)
        .checked_mul(RECORD_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::parse(path, 28, "event count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            bytes.len().min(expected) as u64,
            format!(
                "expected {expected} bytes for {count} events, found {}",
                bytes.len()
            ),
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    for (i, r) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let offset = (HEADER_LEN + i * RECORD_LEN) as u64;
        let p = r[12] as i8;
        if p != 1 && p != -1 {
            return Err(Error::parse(
                path,
                offset + 12,
                format!("invalid polarity {p}"),
            ));
        }
        events.push(Event::new(
            u64::from_le_bytes(r[0..8].try_into().unwrap()),
            u16::from_le_bytes(r[8..10].try_into().unwrap()),
            u16::from_le_bytes(r[10..12].try_into().unwrap()),
            p,
        ));
    }
    EventStream::new(width, height, t_start, t_end, events)
        .map_err(|e| Error::parse(path, HEADER_LEN as u64, e.to_string()))
}

pub fn write_evt1(path: &Path, stream: &EventStream) -> Result<()> {
    fs::write(path, encode_evt1(stream)).map_err(|e| Error::io(path, e))
}

pub fn read_evt1(path: &Path) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_evt1(&bytes, path)
}

pub const CSV_HEADER: &str = "t_us,x,y,p";

pub fn encode_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(16 * (stream.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in stream.events() {
        out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.p));
    }
    out
}

/// Parses the CSV form. Sensor size and time bounds are not stored in CSV
/// and must be supplied.
pub fn decode_csv(
    text: &str,
    path: &Path,
    width: usize,
    height: usize,
    t_start: u64,
    t_end: u64,
) -> Result<EventStream> {
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end() != CSV_HEADER {
        return Err(Error::parse(
            path,
            0,
            format!("expected header `{CSV_HEADER}`"),
        ));
    }
    offset += header.len() as u64;
    let mut events = Vec::new();
    for line in lines {
        let row = line.trim_end();
        if !row.is_empty() {
            let fields: Vec<&str> = row.split(',').collect();
            let bad = |what: &str| Error::parse(path, offset, format!("{what} in `{row}`"));
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            events.push(Event::new(
                fields[0].parse().map_err(|_| bad("bad t_us"))?,
                fields[1].parse().map_err(|_| bad("bad x"))?,
                fields[2].parse().map_err(|_| bad("bad y"))?,
                fields[3].parse().map_err(|_| bad("bad p"))?,
            ));
        }
        offset += line.len() as u64;
    }
    EventStream::new(width, height, t_start, t_end, events)
        .map_err(|e| Error::parse(path, offset, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventStream {
        EventStream::new(
            4,
            3,
            10,
            90,
            vec![
                Event::new(10, 0, 0, 1),
                Event::new(40, 3, 2, -1),
                Event::new(90, 1, 1, 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn record_layout() {
        let b = encode_evt1(&sample());
        assert_eq!(b.len(), 36 + 3 * 16);
        assert_eq!(&b[36 + 16..36 + 16 + 8], &40u64.to_le_bytes());
        assert_eq!(b[36 + 16 + 12], 0xff);
        assert_eq!(&b[36 + 16 + 13..36 + 32], &[0, 0, 0]);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut b = encode_evt1(&sample());
        assert!(decode_evt1(&b[..b.len() - 1], Path::new("e")).is_err());
        b[0] = b'X';
        assert!(decode_evt1(&b, Path::new("e")).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = sample();
        let text = encode_csv(&s);
        assert!(text.starts_with("t_us,x,y,p\n"));
        assert_eq!(decode_csv(&text, Path::new("c"), 4, 3, 10, 90).unwrap(), s);
        let err = decode_csv("t_us,x,y,p\n1,2\n", Path::new("c"), 4, 3, 0, 9).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 11, .. }), "{err}");
    }
}
