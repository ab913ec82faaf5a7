//! FQF1 binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FQF1" | u64 header length | UTF-8 header (key=value lines) | payload bytes
//! ```
//!
//! The payload is one or more typed sections laid out back to back. The
//! reserved header key `sections` lists them as `name:dtype:count` entries
//! separated by commas; everything else in the header is caller metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FQF1";
const SECTIONS_KEY: &str = "sections";

/// Element type of a payload section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    /// Complex pairs of f32.
    C64,
    /// Complex pairs of f64.
    C128,
    U8,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::C64 => "c64",
            Dtype::C128 => "c128",
            Dtype::U8 => "u8",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "f32" => Dtype::F32,
            "f64" => Dtype::F64,
            "c64" => Dtype::C64,
            "c128" => Dtype::C128,
            "u8" => Dtype::U8,
            other => return Err(Error::UnsupportedDtype(other.to_string())),
        })
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
            Dtype::F64 | Dtype::C64 => 8,
            Dtype::C128 => 16,
        }
    }
}

/// A typed array stored in a container.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex<f32>>),
    C128(Vec<Complex<f64>>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::F32(_) => Dtype::F32,
            Payload::F64(_) => Dtype::F64,
            Payload::C64(_) => Dtype::C64,
            Payload::C128(_) => Dtype::C128,
            Payload::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::C64(v) => v.len(),
            Payload::C128(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.dtype().size()
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        out.reserve(self.byte_len());
        match self {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::C64(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            Payload::C128(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            Payload::U8(v) => out.extend_from_slice(v),
        }
    }

    fn read_le(dtype: Dtype, bytes: &[u8]) -> Payload {
        fn f32s(b: &[u8]) -> impl Iterator<Item = f32> + '_ {
            b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        }
        fn f64s(b: &[u8]) -> impl Iterator<Item = f64> + '_ {
            b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        }
        match dtype {
            Dtype::F32 => Payload::F32(f32s(bytes).collect()),
            Dtype::F64 => Payload::F64(f64s(bytes).collect()),
            Dtype::C64 => {
                let v: Vec<f32> = f32s(bytes).collect();
                Payload::C64(v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
            }
            Dtype::C128 => {
                let v: Vec<f64> = f64s(bytes).collect();
                Payload::C128(v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
            }
            Dtype::U8 => Payload::U8(bytes.to_vec()),
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            Payload::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match self {
            Payload::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_c128(&self) -> Option<&[Complex<f64>]> {
        match self {
            Payload::C128(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match self {
            Payload::U8(v) => Some(v),
            _ => None,
        }
    }

    /// Widen any real payload to f64.
    pub fn to_f64_vec(&self) -> Option<Vec<f64>> {
        match self {
            Payload::F64(v) => Some(v.clone()),
            Payload::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            Payload::U8(v) => Some(v.iter().map(|&x| x as f64).collect()),
            _ => None,
        }
    }

    /// Widen any complex payload to `Complex<f64>`.
    pub fn to_c128_vec(&self) -> Option<Vec<Complex<f64>>> {
        match self {
            Payload::C128(v) => Some(v.clone()),
            Payload::C64(v) => Some(v.iter().map(|z| Complex::new(z.re as f64, z.im as f64)).collect()),
            _ => None,
        }
    }
}

/// Key/value metadata. Keys are kept sorted so that files are byte-stable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Header {
    entries: BTreeMap<String, String>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Header(format!("missing key `{key}`")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Header(format!("`{key}` = {raw:?} is not a number")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Header(format!("`{key}` = {raw:?} is not an integer")))
    }

    /// Comma-separated list of floats.
    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Header(format!("`{key}` = {raw:?} is not a number list")))
            })
            .collect()
    }

    pub fn set_f64_list(&mut self, key: &str, values: &[f64]) {
        let s: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        self.set(key, s.join(","));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn to_text(&self) -> Result<String> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Header(format!("invalid header entry {k:?}={v:?}")));
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        Ok(text)
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut header = Header::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Header(format!("line without '=': {line:?}")))?;
            header.entries.insert(k.to_string(), v.to_string());
        }
        Ok(header)
    }
}

/// A named payload section.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub data: Payload,
}

impl Section {
    pub fn new(name: &str, data: Payload) -> Self {
        Self {
            name: name.to_string(),
            data,
        }
    }
}

/// Serialize header and sections to bytes.
pub fn encode(header: &Header, sections: &[Section]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    let listing: Vec<String> = sections
        .iter()
        .map(|s| {
            if s.name.is_empty() || s.name.contains([':', ',', '\n', '=']) {
                return Err(Error::Header(format!("invalid section name {:?}", s.name)));
            }
            Ok(format!("{}:{}:{}", s.name, s.data.dtype().name(), s.data.len()))
        })
        .collect::<Result<_>>()?;
    header.set(SECTIONS_KEY, listing.join(","));
    let text = header.to_text()?;

    let payload_len: usize = sections.iter().map(|s| s.data.byte_len()).sum();
    let mut out = Vec::with_capacity(12 + text.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for s in sections {
        s.data.write_le(&mut out);
    }
    Ok(out)
}

/// Parse bytes produced by [`encode`]. The returned header no longer carries
/// the reserved `sections` key.
pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<Section>)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 12,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic { found });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            found: bytes.len() as u64,
        });
    }
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let header_end = 12u64
        .checked_add(header_len)
        .ok_or_else(|| Error::Header("header length overflow".into()))?;
    if (bytes.len() as u64) < header_end {
        return Err(Error::Truncated {
            expected: header_end,
            found: bytes.len() as u64,
        });
    }
    let text = std::str::from_utf8(&bytes[12..header_end as usize])
        .map_err(|e| Error::Header(format!("header is not UTF-8: {e}")))?;
    let mut header = Header::from_text(text)?;
    let listing = header
        .entries
        .remove(SECTIONS_KEY)
        .ok_or_else(|| Error::Header("missing `sections` key".into()))?;

    let mut layout = Vec::new();
    for entry in listing.split(',').filter(|e| !e.is_empty()) {
        let parts: Vec<&str> = entry.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Header(format!("bad section entry {entry:?}")));
        }
        let dtype = Dtype::parse(parts[1])?;
        let count: u64 = parts[2]
            .parse()
            .map_err(|_| Error::Header(format!("bad section count in {entry:?}")))?;
        layout.push((parts[0].to_string(), dtype, count));
    }

    let expected = layout.iter().try_fold(header_end, |acc, (_, d, n)| {
        n.checked_mul(d.size() as u64).and_then(|b| acc.checked_add(b))
    });
    let expected = expected.ok_or_else(|| Error::SizeMismatch("section sizes overflow".into()))?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::SizeMismatch(format!(
            "header declares {expected} bytes but file has {found}"
        )));
    }

    let mut offset = header_end as usize;
    let mut sections = Vec::with_capacity(layout.len());
    for (name, dtype, count) in layout {
        let len = count as usize * dtype.size();
        let data = Payload::read_le(dtype, &bytes[offset..offset + len]);
        offset += len;
        sections.push(Section { name, data });
    }
    Ok((header, sections))
}

/// Write a multi-section container.
pub fn write_sections(path: &Path, header: &Header, sections: &[Section]) -> Result<()> {
    let bytes = encode(header, sections)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Read a multi-section container.
pub fn read_sections(path: &Path) -> Result<(Header, Vec<Section>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Write a single-payload container (section name `data`).
pub fn write_container(path: &Path, header: &Header, payload: Payload) -> Result<()> {
    write_sections(path, header, &[Section::new("data", payload)])
}

/// Read a single-payload container written by [`write_container`].
pub fn read_container(path: &Path) -> Result<(Header, Payload)> {
    let (header, mut sections) = read_sections(path)?;
    if sections.len() != 1 {
        return Err(Error::SizeMismatch(format!(
            "expected one payload section, found {}",
            sections.len()
        )));
    }
    Ok((header, sections.pop().unwrap().data))
}

/// Look up a section by name.
pub fn take_section(sections: &mut Vec<Section>, name: &str) -> Result<Payload> {
    let idx = sections
        .iter()
        .position(|s| s.name == name)
        .ok_or_else(|| Error::Header(format!("missing section `{name}`")))?;
    Ok(sections.remove(idx).data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_f64_payload() {
        let dir = tmp();
        let path = dir.path().join("empty.fqf");
        let header = Header::new().with("kind", "test");
        write_container(&path, &header, Payload::F64(vec![])).unwrap();
        let (h, p) = read_container(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(p, Payload::F64(vec![]));
    }

    #[test]
    fn f64_round_trip_is_byte_identical() {
        let dir = tmp();
        let a = dir.path().join("a.fqf");
        let b = dir.path().join("b.fqf");
        let header = Header::new().with("units", "m");
        write_container(&a, &header, Payload::F64(vec![1.0, 2.0, 3.0])).unwrap();
        let (h, p) = read_container(&a).unwrap();
        write_container(&b, &h, p).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn c64_payload_is_eight_bytes_per_element() {
        let n = 37;
        let header = Header::new();
        let payload = Payload::C64((0..n).map(|i| Complex::new(i as f32, -(i as f32))).collect());
        let bytes = encode(&header, &[Section::new("data", payload)]).unwrap();
        let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 12 - header_len, 8 * n);
        // first element (0, -0) then (1, -1): check raw little-endian bytes
        let p = 12 + header_len;
        assert_eq!(&bytes[p + 8..p + 12], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[p + 12..p + 16], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("bad.fqf");
        let mut bytes = encode(&Header::new(), &[Section::new("data", Payload::U8(vec![1]))]).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_container(&path), Err(Error::BadMagic { found }) if &found == b"XXXX"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = encode(&Header::new(), &[Section::new("data", Payload::F64(vec![1.0, 2.0]))]).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes_are_a_size_mismatch() {
        let mut bytes = encode(&Header::new(), &[Section::new("data", Payload::F32(vec![1.0]))]).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn unknown_dtype_is_unsupported() {
        let text = "sections=data:f16:1\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(text.len() as u64).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        bytes.extend_from_slice(&[0, 0]);
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedDtype(d)) if d == "f16"));
    }

    #[test]
    fn multi_section_round_trip() {
        let sections = vec![
            Section::new("pos", Payload::F32(vec![1.0, 2.0, 3.0])),
            Section::new("label", Payload::U8(vec![0, 1, 1])),
        ];
        let header = Header::new().with("frame", 4);
        let bytes = encode(&header, &sections).unwrap();
        let (h, s) = decode(&bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(s, sections);
    }

    fn payload_strategy() -> impl Strategy<Value = Payload> {
        prop_oneof![
            prop::collection::vec(any::<f32>(), 0..64).prop_map(Payload::F32),
            prop::collection::vec(any::<f64>(), 0..64).prop_map(Payload::F64),
            prop::collection::vec((any::<f32>(), any::<f32>()), 0..64)
                .prop_map(|v| Payload::C64(v.into_iter().map(|(a, b)| Complex::new(a, b)).collect())),
            prop::collection::vec((any::<f64>(), any::<f64>()), 0..64)
                .prop_map(|v| Payload::C128(v.into_iter().map(|(a, b)| Complex::new(a, b)).collect())),
            prop::collection::vec(any::<u8>(), 0..64).prop_map(Payload::U8),
        ]
    }

    proptest! {
        // Bit-level identity, so NaN payloads are compared through their encodings.
        #[test]
        fn round_trip_identity(payload in payload_strategy(), key in "k[a-z]{1,7}", value in "[ -~&&[^=]]{0,16}") {
            let header = Header::new().with(&key, &value);
            let sections = [Section::new("data", payload)];
            let bytes = encode(&header, &sections).unwrap();
            let (h, s) = decode(&bytes).unwrap();
            prop_assert_eq!(h, header.clone());
            prop_assert_eq!(encode(&header, &s).unwrap(), bytes);
        }
    }
}
