//! The VLMP1 tensor container.
//!
//! ```text
//! offset  size         field
//! 0       4            magic "VLMP"
//! 4       4            version, u32 LE (= 1)
//! 8       8            header_len, u64 LE
//! 16      header_len   header, compact UTF-8 JSON {"tensors": {...}, "meta": {...}}
//! 16+hl   ...          payload, tensors in name order at 8-byte aligned offsets
//! ```
//!
//! The reader validates the complete layout before exposing any tensor: every
//! byte of the payload is either inside exactly one tensor or a zero pad byte,
//! and the payload ends exactly where the last tensor ends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"VLMP";
pub const VERSION: u32 = 1;
pub const ALIGNMENT: u64 = 8;
const PREAMBLE_LEN: usize = 16;

/// Canonical tensor names.
pub mod names {
    pub fn vision_patch(layer: usize) -> String {
        format!("vision.patch.layer{layer}")
    }
    pub fn vision_cls(layer: usize) -> String {
        format!("vision.cls.layer{layer}")
    }
    pub fn proj_hidden(layer: usize) -> String {
        format!("proj.hidden.layer{layer}")
    }
    pub fn llm_hidden(layer: usize) -> String {
        format!("llm.hidden.layer{layer}")
    }
    /// Attention maps, shape `[heads, Q, K]`.
    pub fn llm_attn(layer: usize) -> String {
        format!("llm.attn.layer{layer}")
    }
    /// Predicted per-patch depth, shape `[grid_h, grid_w]` or `[grid_h, grid_w, 1]`.
    pub const DEPTH_MAP: &str = "depth.map";
    /// Ground-truth depth at original image resolution, shape `[orig_h, orig_w]`.
    pub const DEPTH_GT: &str = "depth.gt";
    pub const PROBE_WEIGHTS: &str = "probe.weights";
    pub const PROBE_BIAS: &str = "probe.bias";
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated archive: {0}")]
    Truncated(String),
    #[error("header is not UTF-8")]
    HeaderUtf8,
    #[error("malformed header: {0}")]
    HeaderJson(String),
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("duplicate meta key `{0}`")]
    DuplicateMetaKey(String),
    #[error("empty tensor name")]
    EmptyName,
    #[error("tensor `{name}`: nbytes {declared} does not match dtype and shape ({expected})")]
    SizeMismatch {
        name: String,
        declared: u64,
        expected: u64,
    },
    #[error("tensor `{name}`: offset {offset} is not a multiple of {ALIGNMENT}")]
    Misaligned { name: String, offset: u64 },
    #[error("tensors `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("non-zero padding byte at payload offset {0}")]
    NonZeroPadding(u64),
    #[error("{0} trailing bytes after last tensor")]
    TrailingBytes(u64),
    #[error("no tensor named `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has dtype {actual}, expected {expected}")]
    WrongDType {
        name: String,
        actual: DType,
        expected: &'static str,
    },
}

impl ArchiveError {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ArchiveError::BadMagic(_) => "bad_magic",
            ArchiveError::UnsupportedVersion(_) => "unsupported_version",
            ArchiveError::Truncated(_) => "truncated",
            ArchiveError::HeaderUtf8 => "header_utf8",
            ArchiveError::HeaderJson(_) => "header_json",
            ArchiveError::DuplicateName(_) => "duplicate_name",
            ArchiveError::DuplicateMetaKey(_) => "duplicate_meta_key",
            ArchiveError::EmptyName => "empty_name",
            ArchiveError::SizeMismatch { .. } => "size_mismatch",
            ArchiveError::Misaligned { .. } => "misaligned",
            ArchiveError::Overlap(..) => "overlap",
            ArchiveError::NonZeroPadding(_) => "nonzero_padding",
            ArchiveError::TrailingBytes(_) => "trailing_bytes",
            ArchiveError::MissingTensor(_) => "missing_tensor",
            ArchiveError::WrongDType { .. } => "wrong_dtype",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F16,
    I64,
    U8,
}

impl DType {
    pub fn size(self) -> u64 {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
            DType::I64 => 8,
            DType::U8 => 1,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F16 => "f16",
            DType::I64 => "i64",
            DType::U8 => "u8",
        })
    }
}

fn expected_nbytes(dtype: DType, shape: &[u64]) -> Option<u64> {
    shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
}

/// A typed, shaped block of little-endian row-major bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl Tensor {
    pub fn new(dtype: DType, shape: Vec<usize>, data: Vec<u8>) -> Result<Self, ArchiveError> {
        let dims: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
        let expected = expected_nbytes(dtype, &dims).unwrap_or(u64::MAX);
        if expected != data.len() as u64 {
            return Err(ArchiveError::SizeMismatch {
                name: String::new(),
                declared: data.len() as u64,
                expected,
            });
        }
        Ok(Tensor { dtype, shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Result<Self, ArchiveError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Tensor::new(DType::F32, shape, data)
    }

    /// Stores `values` rounded to half precision.
    pub fn from_f32_as_f16(shape: Vec<usize>, values: &[f32]) -> Result<Self, ArchiveError> {
        let data = values
            .iter()
            .flat_map(|&v| half::f16::from_f32(v).to_le_bytes())
            .collect();
        Tensor::new(DType::F16, shape, data)
    }

    pub fn from_i64(shape: Vec<usize>, values: &[i64]) -> Result<Self, ArchiveError> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Tensor::new(DType::I64, shape, data)
    }

    pub fn from_u8(shape: Vec<usize>, values: &[u8]) -> Result<Self, ArchiveError> {
        Tensor::new(DType::U8, shape, values.to_vec())
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Floating-point view; f16 is up-converted. Integer dtypes are rejected.
    pub fn to_f32(&self) -> Result<Vec<f32>, ArchiveError> {
        match self.dtype {
            DType::F32 => Ok(self
                .data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()),
            DType::F16 => Ok(self
                .data
                .chunks_exact(2)
                .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect()),
            other => Err(ArchiveError::WrongDType {
                name: String::new(),
                actual: other,
                expected: "f32 or f16",
            }),
        }
    }

    pub fn to_i64(&self) -> Result<Vec<i64>, ArchiveError> {
        if self.dtype != DType::I64 {
            return Err(ArchiveError::WrongDType {
                name: String::new(),
                actual: self.dtype,
                expected: "i64",
            });
        }
        Ok(self
            .data
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Named tensors plus free-form string metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TensorArchive {
    pub tensors: BTreeMap<String, Tensor>,
    pub meta: BTreeMap<String, String>,
}

impl TensorArchive {
    pub fn get(&self, name: &str) -> Result<&Tensor, ArchiveError> {
        self.tensors
            .get(name)
            .ok_or_else(|| ArchiveError::MissingTensor(name.to_string()))
    }

    pub fn get_f32(&self, name: &str) -> Result<Vec<f32>, ArchiveError> {
        self.get(name)?.to_f32().map_err(|e| match e {
            ArchiveError::WrongDType {
                actual, expected, ..
            } => ArchiveError::WrongDType {
                name: name.to_string(),
                actual,
                expected,
            },
            e => e,
        })
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ArchiveError> {
        write_archive(
            self.tensors.iter().map(|(k, v)| (k.clone(), v.clone())),
            &self.meta,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(read_archive(&bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: DType,
    shape: Vec<u64>,
    offset: u64,
    nbytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    tensors: Entries<HeaderEntry>,
    meta: Entries<String>,
}

/// A JSON object kept as an ordered list so duplicate keys stay visible.
#[derive(Debug)]
struct Entries<V>(Vec<(String, V)>);

impl<V: Serialize> Serialize for Entries<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Entries<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = Entries<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, V>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(PhantomData))
    }
}

fn align_up(x: u64) -> u64 {
    x.div_ceil(ALIGNMENT) * ALIGNMENT
}

/// Serializes tensors and metadata into VLMP1 bytes.
///
/// Output depends only on the logical content: tensors are laid out in name
/// order regardless of the order they are supplied in.
pub fn write_archive<I>(
    tensors: I,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>, ArchiveError>
where
    I: IntoIterator<Item = (String, Tensor)>,
{
    let mut sorted: BTreeMap<String, Tensor> = BTreeMap::new();
    for (name, tensor) in tensors {
        if name.is_empty() {
            return Err(ArchiveError::EmptyName);
        }
        let dims: Vec<u64> = tensor.shape.iter().map(|&d| d as u64).collect();
        let expected = expected_nbytes(tensor.dtype, &dims).unwrap_or(u64::MAX);
        if expected != tensor.data.len() as u64 {
            return Err(ArchiveError::SizeMismatch {
                name,
                declared: tensor.data.len() as u64,
                expected,
            });
        }
        if sorted.contains_key(&name) {
            return Err(ArchiveError::DuplicateName(name));
        }
        sorted.insert(name, tensor);
    }

    let mut entries = Vec::with_capacity(sorted.len());
    let mut cursor = 0u64;
    for (name, tensor) in &sorted {
        let offset = align_up(cursor);
        let nbytes = tensor.data.len() as u64;
        entries.push((
            name.clone(),
            HeaderEntry {
                dtype: tensor.dtype,
                shape: tensor.shape.iter().map(|&d| d as u64).collect(),
                offset,
                nbytes,
            },
        ));
        cursor = offset + nbytes;
    }
    let header = Header {
        tensors: Entries(entries),
        meta: Entries(meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization is infallible");

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header_bytes.len() + cursor as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    let payload_start = out.len();
    for ((_, entry), tensor) in header.tensors.0.iter().zip(sorted.values()) {
        out.resize(payload_start + entry.offset as usize, 0);
        out.extend_from_slice(&tensor.data);
    }
    Ok(out)
}

/// Parses and fully validates VLMP1 bytes.
pub fn read_archive(bytes: &[u8]) -> Result<TensorArchive, ArchiveError> {
    if bytes.len() < 4 {
        return Err(ArchiveError::Truncated("missing magic".into()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(ArchiveError::BadMagic(magic));
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(ArchiveError::Truncated("incomplete preamble".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ArchiveError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let available = (bytes.len() - PREAMBLE_LEN) as u64;
    if header_len > available {
        return Err(ArchiveError::Truncated(format!(
            "header_len {header_len} exceeds remaining {available} bytes"
        )));
    }
    let header_end = PREAMBLE_LEN + header_len as usize;
    let header_raw = &bytes[PREAMBLE_LEN..header_end];
    let header_text = std::str::from_utf8(header_raw).map_err(|_| ArchiveError::HeaderUtf8)?;
    if !(header_text.starts_with('{') && header_text.ends_with('}')) {
        return Err(ArchiveError::HeaderJson(
            "header must be a bare JSON object".into(),
        ));
    }
    let header: Header =
        serde_json::from_str(header_text).map_err(|e| ArchiveError::HeaderJson(e.to_string()))?;

    let mut meta = BTreeMap::new();
    for (k, v) in header.meta.0 {
        if meta.insert(k.clone(), v).is_some() {
            return Err(ArchiveError::DuplicateMetaKey(k));
        }
    }
    let mut seen = BTreeSet::new();
    for (name, _) in &header.tensors.0 {
        if name.is_empty() {
            return Err(ArchiveError::EmptyName);
        }
        if !seen.insert(name.as_str()) {
            return Err(ArchiveError::DuplicateName(name.clone()));
        }
    }

    let payload = &bytes[header_end..];
    let payload_len = payload.len() as u64;
    for (name, e) in &header.tensors.0 {
        let expected = expected_nbytes(e.dtype, &e.shape).unwrap_or(u64::MAX);
        if expected != e.nbytes {
            return Err(ArchiveError::SizeMismatch {
                name: name.clone(),
                declared: e.nbytes,
                expected,
            });
        }
        if e.offset % ALIGNMENT != 0 {
            return Err(ArchiveError::Misaligned {
                name: name.clone(),
                offset: e.offset,
            });
        }
        match e.offset.checked_add(e.nbytes) {
            Some(end) if end <= payload_len => {}
            _ => {
                return Err(ArchiveError::Truncated(format!(
                    "tensor `{name}` ends beyond payload of {payload_len} bytes"
                )))
            }
        }
    }

    // Empty tensors are empty ranges; the padding before their offsets is
    // part of the layout like any other.
    let mut ranges: Vec<(u64, u64, &str)> = header
        .tensors
        .0
        .iter()
        .map(|(n, e)| (e.offset, e.offset + e.nbytes, n.as_str()))
        .collect();
    ranges.sort();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(ArchiveError::Overlap(pair[0].2.into(), pair[1].2.into()));
        }
    }

    let mut cursor = 0u64;
    for &(start, end, _) in &ranges {
        check_zero(payload, cursor, start)?;
        cursor = end;
    }
    if cursor < payload_len {
        return Err(ArchiveError::TrailingBytes(payload_len - cursor));
    }

    let mut tensors = BTreeMap::new();
    for (name, e) in header.tensors.0 {
        let data = payload[e.offset as usize..(e.offset + e.nbytes) as usize].to_vec();
        let shape = e.shape.iter().map(|&d| d as usize).collect();
        tensors.insert(
            name,
            Tensor {
                dtype: e.dtype,
                shape,
                data,
            },
        );
    }
    Ok(TensorArchive { tensors, meta })
}

fn check_zero(payload: &[u8], from: u64, to: u64) -> Result<(), ArchiveError> {
    match payload[from as usize..to as usize]
        .iter()
        .position(|&b| b != 0)
    {
        Some(i) => Err(ArchiveError::NonZeroPadding(from + i as u64)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn empty_archive_round_trips() {
        let bytes = write_archive(Vec::new(), &meta(&[("k", "v")])).unwrap();
        let header = br#"{"tensors":{},"meta":{"k":"v"}}"#;
        assert_eq!(&bytes[0..4], b"VLMP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(
            u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            header.len() as u64
        );
        assert_eq!(&bytes[16..], header);
        let back = read_archive(&bytes).unwrap();
        assert!(back.tensors.is_empty());
        assert_eq!(back.meta, meta(&[("k", "v")]));
    }

    #[test]
    fn f32_payload_is_little_endian() {
        let t = Tensor::from_f32(vec![3], &[1.0, 2.0, 3.0]).unwrap();
        let bytes = write_archive(vec![("x".to_string(), t)], &BTreeMap::new()).unwrap();
        // 1.0 = 0x3F800000, 2.0 = 0x40000000, 3.0 = 0x40400000, little-endian
        let expected_payload: [u8; 12] = [
            0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x40, 0x40,
        ];
        assert_eq!(&bytes[bytes.len() - 12..], &expected_payload);
        let back = read_archive(&bytes).unwrap();
        assert_eq!(back.get("x").unwrap().bytes(), &expected_payload);
        assert_eq!(back.get_f32("x").unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn submission_order_does_not_matter() {
        let a = Tensor::from_u8(vec![3], &[1, 2, 3]).unwrap();
        let b = Tensor::from_i64(vec![1], &[-5]).unwrap();
        let fwd = write_archive(
            vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())],
            &BTreeMap::new(),
        )
        .unwrap();
        let rev = write_archive(
            vec![("b".to_string(), b), ("a".to_string(), a)],
            &BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(fwd, rev);
        // "a" occupies 3 bytes, "b" starts at the next 8-byte boundary
        let back = read_archive(&fwd).unwrap();
        assert_eq!(back.get("b").unwrap().to_i64().unwrap(), vec![-5]);
    }

    #[test]
    fn duplicate_and_inconsistent_inputs_rejected() {
        let t = Tensor::from_u8(vec![1], &[1]).unwrap();
        let err = write_archive(
            vec![("x".to_string(), t.clone()), ("x".to_string(), t)],
            &BTreeMap::new(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "duplicate_name");
        assert_eq!(
            Tensor::new(DType::F32, vec![2], vec![0; 7])
                .unwrap_err()
                .code(),
            "size_mismatch"
        );
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_archive(Vec::new(), &BTreeMap::new()).unwrap();
        bytes[0] = b'X';
        assert_eq!(read_archive(&bytes).unwrap_err().code(), "bad_magic");
    }

    #[test]
    fn bad_version() {
        let mut bytes = write_archive(Vec::new(), &BTreeMap::new()).unwrap();
        bytes[4] = 2;
        assert_eq!(
            read_archive(&bytes).unwrap_err().code(),
            "unsupported_version"
        );
    }

    #[test]
    fn truncated_by_one_byte() {
        let t = Tensor::from_f32(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = write_archive(vec![("x".to_string(), t)], &BTreeMap::new()).unwrap();
        let err = read_archive(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(err.code(), "truncated");
    }

    fn with_header(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VLMP");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn empty_tensor_after_padding_round_trips() {
        let tensors = vec![
            ("a".to_string(), Tensor::from_u8(vec![3], &[1, 2, 3]).unwrap()),
            ("b".to_string(), Tensor::from_u8(vec![0], &[]).unwrap()),
        ];
        let bytes = write_archive(tensors, &BTreeMap::new()).unwrap();
        let back = read_archive(&bytes).unwrap();
        assert_eq!(back.get("b").unwrap().numel(), 0);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn overlapping_ranges() {
        let h = r#"{"tensors":{"a":{"dtype":"u8","shape":[16],"offset":0,"nbytes":16},"b":{"dtype":"u8","shape":[8],"offset":8,"nbytes":8}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(h, &[1; 16])).unwrap_err().code(),
            "overlap"
        );
    }

    #[test]
    fn header_strictness() {
        let unknown = r#"{"tensors":{},"meta":{},"extra":1}"#;
        assert_eq!(
            read_archive(&with_header(unknown, &[])).unwrap_err().code(),
            "header_json"
        );
        let entry_unknown =
            r#"{"tensors":{"a":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1,"x":0}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(entry_unknown, &[1]))
                .unwrap_err()
                .code(),
            "header_json"
        );
        let dup = r#"{"tensors":{"a":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1},"a":{"dtype":"u8","shape":[1],"offset":8,"nbytes":1}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(dup, &[1, 0, 0, 0, 0, 0, 0, 0, 1]))
                .unwrap_err()
                .code(),
            "duplicate_name"
        );
        let padded = r#" {"tensors":{},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(padded, &[])).unwrap_err().code(),
            "header_json"
        );
        let bad_dtype =
            r#"{"tensors":{"a":{"dtype":"f64","shape":[1],"offset":0,"nbytes":8}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(bad_dtype, &[0; 8]))
                .unwrap_err()
                .code(),
            "header_json"
        );
    }

    #[test]
    fn padding_and_trailing_bytes() {
        let h = r#"{"tensors":{"a":{"dtype":"u8","shape":[1],"offset":0,"nbytes":1},"b":{"dtype":"u8","shape":[1],"offset":8,"nbytes":1}},"meta":{}}"#;
        let mut payload = vec![7, 0, 0, 0, 0, 0, 0, 0, 9];
        assert!(read_archive(&with_header(h, &payload)).is_ok());
        payload[3] = 1;
        assert_eq!(
            read_archive(&with_header(h, &payload)).unwrap_err().code(),
            "nonzero_padding"
        );
        payload[3] = 0;
        payload.push(0);
        assert_eq!(
            read_archive(&with_header(h, &payload)).unwrap_err().code(),
            "trailing_bytes"
        );
    }

    #[test]
    fn misaligned_and_size_mismatch() {
        let h = r#"{"tensors":{"a":{"dtype":"u8","shape":[1],"offset":3,"nbytes":1}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(h, &[0; 4])).unwrap_err().code(),
            "misaligned"
        );
        let h = r#"{"tensors":{"a":{"dtype":"f32","shape":[2],"offset":0,"nbytes":4}},"meta":{}}"#;
        assert_eq!(
            read_archive(&with_header(h, &[0; 4])).unwrap_err().code(),
            "size_mismatch"
        );
    }

    #[test]
    fn f16_upconverts() {
        let t = Tensor::from_f32_as_f16(vec![3], &[0.5, -2.0, 1.0e-3]).unwrap();
        let back =
            read_archive(&write_archive(vec![("h".into(), t)], &BTreeMap::new()).unwrap()).unwrap();
        let v = back.get_f32("h").unwrap();
        assert_eq!(v[0], 0.5);
        assert_eq!(v[1], -2.0);
        assert!((v[2] - 1.0e-3).abs() < 1e-6);
        assert_eq!(
            back.get_f32("missing").unwrap_err().code(),
            "missing_tensor"
        );
    }
}
