//! Flat parameter vectors with a named segment layout, plus the on-disk
//! serialization used by checkpoints: a layout header (segment name, offset,
//! length) followed by the raw values as little-endian 64-bit floats.

use std::sync::Arc;

use super::DiffError;

/// One named contiguous region of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Immutable segment table shared by every clone of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder { segments: Vec::new(), total: 0 }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

pub struct LayoutBuilder {
    segments: Vec<Segment>,
    total: usize,
}

impl LayoutBuilder {
    /// Appends a segment; panics on duplicate names (a construction bug).
    pub fn push(mut self, name: &str, len: usize) -> Self {
        assert!(
            self.segments.iter().all(|s| s.name != name),
            "duplicate segment name `{name}`"
        );
        self.segments.push(Segment { name: name.to_string(), offset: self.total, len });
        self.total += len;
        self
    }

    pub fn build(self) -> Arc<Layout> {
        Arc::new(Layout { segments: self.segments, total: self.total })
    }
}

/// A flat `f64` vector carved into named segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let n = layout.total_len();
        ParamVector { layout, data: vec![0.0; n] }
    }

    pub fn from_data(layout: Arc<Layout>, data: Vec<f64>) -> Result<Self, DiffError> {
        if data.len() != layout.total_len() {
            return Err(DiffError::LayoutMismatch {
                detail: format!(
                    "data length {} does not match layout total {}",
                    data.len(),
                    layout.total_len()
                ),
            });
        }
        Ok(ParamVector { layout, data })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn seg(&self, name: &str) -> Result<&[f64], DiffError> {
        let s = self
            .layout
            .find(name)
            .ok_or_else(|| DiffError::MissingSegment { name: name.to_string() })?;
        Ok(&self.data[s.offset..s.offset + s.len])
    }

    pub fn seg_mut(&mut self, name: &str) -> Result<&mut [f64], DiffError> {
        let s = self
            .layout
            .find(name)
            .cloned()
            .ok_or_else(|| DiffError::MissingSegment { name: name.to_string() })?;
        Ok(&mut self.data[s.offset..s.offset + s.len])
    }

    /// True when both vectors share an identical layout.
    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector { layout: self.layout.clone(), data: vec![0.0; self.data.len()] }
    }

    /// `self + k * other` as a new vector.
    pub fn add_scaled(&self, k: f64, other: &ParamVector) -> Result<ParamVector, DiffError> {
        if !self.same_layout(other) {
            return Err(DiffError::LayoutMismatch { detail: "add_scaled operands".into() });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a + k * b)
            .collect();
        Ok(ParamVector { layout: self.layout.clone(), data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Layout header plus little-endian values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layout.segments().len() as u32).to_le_bytes());
        for s in self.layout.segments() {
            let name = s.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(s.offset as u64).to_le_bytes());
            out.extend_from_slice(&(s.len as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`ParamVector::to_bytes`]; consumed bytes are returned so
    /// callers can embed vectors inside larger records.
    pub fn from_bytes(bytes: &[u8]) -> Result<(ParamVector, usize), DiffError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(DiffError::Corrupt { detail: "bad parameter-vector magic".into() });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(DiffError::FormatVersion { found: version, expected: FORMAT_VERSION });
        }
        let nsegs = r.u32()? as usize;
        let mut builder = Layout::builder();
        let mut expected_offset = 0usize;
        for _ in 0..nsegs {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| DiffError::Corrupt { detail: "segment name not utf-8".into() })?
                .to_string();
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            if offset != expected_offset {
                return Err(DiffError::Corrupt {
                    detail: format!("segment `{name}` offset {offset} != {expected_offset}"),
                });
            }
            expected_offset += len;
            builder = builder.push(&name, len);
        }
        let layout = builder.build();
        let data_len = r.u64()? as usize;
        if data_len != layout.total_len() {
            return Err(DiffError::Corrupt {
                detail: format!("data length {data_len} != layout total {}", layout.total_len()),
            });
        }
        let mut data = Vec::with_capacity(data_len);
        for _ in 0..data_len {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        Ok((ParamVector { layout, data }, r.pos))
    }
}

const MAGIC: &[u8] = b"PVEC";
const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DiffError> {
        if self.pos + n > self.buf.len() {
            return Err(DiffError::Corrupt { detail: "truncated record".into() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DiffError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DiffError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
