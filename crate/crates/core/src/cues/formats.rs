//! Middlebury `.flo` and grayscale PFM readers and writers.

use std::fs;
use std::path::Path;

use super::DenseMap;
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

const FLO_MAGIC: f32 = 202021.25;
/// Refuse headers announcing more cells than this.
const MAX_CELLS: u64 = 1 << 28;

pub fn load_flow_field(path: &Path) -> Result<(DenseMap, DenseMap)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn save_flow_field(path: &Path, u: &DenseMap, v: &DenseMap) -> Result<()> {
    write_atomic(path, &encode_flo(u, v)?)
}

pub fn decode_flo(bytes: &[u8]) -> Result<(DenseMap, DenseMap)> {
    if bytes.len() < 12 {
        return Err(Error::format(bytes.len() as u64, "truncated .flo header"));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::format(0, format!("bad .flo magic {magic}")));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::format(4, format!("invalid .flo dimensions {width}x{height}")));
    }
    let cells = width as u64 * height as u64;
    if cells > MAX_CELLS {
        return Err(Error::format(4, format!("implausible .flo dimensions {width}x{height}")));
    }
    let expected = 12 + cells * 8;
    if (bytes.len() as u64) < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated .flo payload, expected {expected} bytes"),
        ));
    }
    let cells = cells as usize;
    let mut u = Vec::with_capacity(cells);
    let mut v = Vec::with_capacity(cells);
    for (i, pair) in bytes[12..12 + cells * 8].chunks_exact(8).enumerate() {
        let a = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        let b = f32::from_le_bytes(pair[4..8].try_into().unwrap());
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::format(12 + 8 * i as u64, "non-finite flow value"));
        }
        u.push(a);
        v.push(b);
    }
    let (w, h) = (width as usize, height as usize);
    Ok((DenseMap::new(w, h, u)?, DenseMap::new(w, h, v)?))
}

pub fn encode_flo(u: &DenseMap, v: &DenseMap) -> Result<Vec<u8>> {
    if (u.width(), u.height()) != (v.width(), v.height()) {
        return Err(Error::invalid("flow components differ in size"));
    }
    let mut out = Vec::with_capacity(12 + u.values().len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(u.width() as i32).to_le_bytes());
    out.extend_from_slice(&(u.height() as i32).to_le_bytes());
    for (a, b) in u.values().iter().zip(v.values()) {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

pub fn load_disparity_map(path: &Path) -> Result<DenseMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn save_disparity_map(path: &Path, map: &DenseMap) -> Result<()> {
    write_atomic(path, &encode_pfm(map))
}

/// Header tokenizer: whitespace-separated ASCII tokens.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "truncated PFM header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start as u64, "non-ASCII PFM header"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let at = self.pos as u64;
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::format(at, format!("invalid PFM {what} {tok:?}")))
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DenseMap> {
    let mut hdr = Header { bytes, pos: 0 };
    match hdr.token()? {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedFormat("color PFM (PF)".into())),
        other => return Err(Error::format(0, format!("bad PFM magic {other:?}"))),
    }
    let width: i64 = hdr.number("width")?;
    let height: i64 = hdr.number("height")?;
    if width <= 0 || height <= 0 {
        return Err(Error::format(2, format!("invalid PFM dimensions {width}x{height}")));
    }
    if (width as u64).saturating_mul(height as u64) > MAX_CELLS {
        return Err(Error::format(2, format!("implausible PFM dimensions {width}x{height}")));
    }
    let scale: f64 = hdr.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(hdr.pos as u64, "PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    // exactly one whitespace byte separates the header from the raster
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(Error::format(hdr.pos as u64, "missing PFM header terminator"));
    }
    let data_start = hdr.pos + 1;
    let (w, h) = (width as usize, height as usize);
    let need = w * h * 4;
    if bytes.len() < data_start + need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated PFM raster, expected {} bytes", data_start + need),
        ));
    }
    let mut values = vec![0f32; w * h];
    for (row_idx, row) in bytes[data_start..data_start + need].chunks_exact(w * 4).enumerate() {
        // stored bottom-up
        let dst = &mut values[(h - 1 - row_idx) * w..(h - row_idx) * w];
        for (i, (d, c)) in dst.iter_mut().zip(row.chunks_exact(4)).enumerate() {
            let raw: [u8; 4] = c.try_into().unwrap();
            *d = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
            if !d.is_finite() {
                let off = data_start + (row_idx * w + i) * 4;
                return Err(Error::format(off as u64, "non-finite PFM value"));
            }
        }
    }
    DenseMap::new(w, h, values)
}

/// Little-endian grayscale PFM.
pub fn encode_pfm(map: &DenseMap) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 4);
    for row in map.values().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flo_bytes(w: i32, h: i32, payload: &[f32]) -> Vec<u8> {
        let mut b = FLO_MAGIC.to_le_bytes().to_vec();
        b.extend_from_slice(&w.to_le_bytes());
        b.extend_from_slice(&h.to_le_bytes());
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn flo_decodes_interleaved() {
        let (u, v) = decode_flo(&flo_bytes(2, 1, &[1.0, 0.0, -1.0, 0.5])).unwrap();
        assert_eq!(u.values(), &[1.0, -1.0]);
        assert_eq!(v.values(), &[0.0, 0.5]);
        assert_eq!((u.width(), u.height()), (2, 1));
    }

    #[test]
    fn flo_bad_magic() {
        let mut b = flo_bytes(1, 1, &[0.0, 0.0]);
        b[0..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_flo(&b), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn flo_truncated_reports_offset() {
        let b = flo_bytes(2, 2, &[0.0; 5]);
        match decode_flo(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 12 + 20),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_flo(&b[..7]), Err(Error::Format { .. })));
    }

    #[test]
    fn flo_rejects_bad_dims() {
        assert!(decode_flo(&flo_bytes(-2, 1, &[])).is_err());
        assert!(decode_flo(&flo_bytes(0, 1, &[])).is_err());
    }

    #[test]
    fn pfm_single_cell() {
        let mut b = b"Pf\n1 1\n-1.0\n".to_vec();
        b.extend_from_slice(&0.25f32.to_le_bytes());
        let m = decode_pfm(&b).unwrap();
        assert_eq!(m.values(), &[0.25]);
    }

    #[test]
    fn pfm_bottom_up_rows() {
        // width 1, height 2: first stored row is the bottom row
        let mut b = b"Pf\n1 2\n-1\n".to_vec();
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&2.0f32.to_le_bytes());
        let m = decode_pfm(&b).unwrap();
        assert_eq!(m.values(), &[2.0, 1.0]);
    }

    #[test]
    fn pfm_big_endian() {
        let mut b = b"Pf\n2 1\n1.0\n".to_vec();
        b.extend_from_slice(&3.5f32.to_be_bytes());
        b.extend_from_slice(&(-1.0f32).to_be_bytes());
        assert_eq!(decode_pfm(&b).unwrap().values(), &[3.5, -1.0]);
    }

    #[test]
    fn pfm_errors() {
        assert!(matches!(decode_pfm(b"PF\n1 1\n-1\n...."), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_pfm(b"Pf\n-1 1\n-1\n...."), Err(Error::Format { .. })));
        assert!(matches!(decode_pfm(b"P5\n1 1\n255\n."), Err(Error::Format { .. })));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1\n\0\0\0\0"), Err(Error::Format { .. })));
    }

    #[test]
    fn pfm_writer_layout() {
        let m = DenseMap::new(1, 2, vec![5.0, 6.0]).unwrap();
        let b = encode_pfm(&m);
        assert!(b.starts_with(b"Pf\n1 2\n-1\n"));
        let body = &b[b.len() - 8..];
        assert_eq!(&body[0..4], &6.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&b).unwrap(), m);
    }
}
