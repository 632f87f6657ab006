//! MRC2014 volume files, dataset manifests and seeded subset sampling.
//!
//! See `docs/FORMATS.md` for byte offsets. Only mode 2 (IEEE-754 `f32`)
//! volumes are accepted. Files may be little- or big-endian (decided by the
//! machine stamp at byte 212); files are always written little-endian.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{Dims, Volume3D};

pub const HEADER_LEN: usize = 1024;
pub const MAP_MAGIC: &[u8; 4] = b"MAP ";
pub const MAGIC_OFFSET: usize = 208;
pub const STAMP_OFFSET: usize = 212;
pub const MODE_F32: i32 = 2;
const STAMP_LITTLE: [u8; 4] = [0x44, 0x44, 0x00, 0x00];
const NVERSION: i32 = 20140;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// Parsed 1024-byte MRC header.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcHeader {
    pub nx: i32,
    pub ny: i32,
    pub nz: i32,
    pub mode: i32,
    pub start: [i32; 3],
    pub sampling: [i32; 3],
    pub cell_lengths: [f32; 3],
    pub cell_angles: [f32; 3],
    pub axis_map: [i32; 3],
    pub dmin: f32,
    pub dmax: f32,
    pub dmean: f32,
    pub ispg: i32,
    pub nsymbt: i32,
    pub extra: [u8; 100],
    pub origin: [f32; 3],
    pub map: [u8; 4],
    pub machst: [u8; 4],
    pub rms: f32,
    pub nlabl: i32,
    pub labels: [[u8; 80]; 10],
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn word(&self, off: usize) -> [u8; 4] {
        self.bytes[off..off + 4].try_into().unwrap()
    }

    fn i32(&self, off: usize) -> i32 {
        match self.endian {
            Endian::Little => i32::from_le_bytes(self.word(off)),
            Endian::Big => i32::from_be_bytes(self.word(off)),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.word(off)),
            Endian::Big => f32::from_be_bytes(self.word(off)),
        }
    }

    fn i32x3(&self, off: usize) -> [i32; 3] {
        [self.i32(off), self.i32(off + 4), self.i32(off + 8)]
    }

    fn f32x3(&self, off: usize) -> [f32; 3] {
        [self.f32(off), self.f32(off + 4), self.f32(off + 8)]
    }
}

impl MrcHeader {
    /// Header for a volume written by this crate: mode 2, 1 Å voxels,
    /// statistics recomputed from the data.
    pub fn for_volume(vol: &Volume3D) -> Self {
        let dims = vol.dims();
        let (dmin, dmax) = vol.min_max();
        let mean = vol.mean();
        let rms = (vol
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / vol.len() as f64)
            .sqrt();
        let (nx, ny, nz) = (dims.width as i32, dims.height as i32, dims.depth as i32);
        let mut extra = [0u8; 100];
        extra[12..16].copy_from_slice(&NVERSION.to_le_bytes());
        let mut labels = [[b' '; 80]; 10];
        let label = b"cryovox";
        labels[0][..label.len()].copy_from_slice(label);
        Self {
            nx,
            ny,
            nz,
            mode: MODE_F32,
            start: [0; 3],
            sampling: [nx, ny, nz],
            cell_lengths: [nx as f32, ny as f32, nz as f32],
            cell_angles: [90.0; 3],
            axis_map: [1, 2, 3],
            dmin,
            dmax,
            dmean: mean as f32,
            ispg: 1,
            nsymbt: 0,
            extra,
            origin: [0.0; 3],
            map: *MAP_MAGIC,
            machst: STAMP_LITTLE,
            rms: rms as f32,
            nlabl: 1,
            labels,
        }
    }

    /// Volume dims `(depth, height, width) = (nz, ny, nx)`.
    pub fn dims(&self) -> Dims {
        Dims::new(self.nz as usize, self.ny as usize, self.nx as usize)
    }

    pub fn data_offset(&self) -> usize {
        HEADER_LEN + self.nsymbt as usize
    }

    pub fn endian(&self) -> Endian {
        stamp_endian(&self.machst).unwrap_or(Endian::Little)
    }

    /// Parses and validates the first 1024 bytes of `bytes`.
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                reason: format!("{} bytes is shorter than the 1024-byte header", bytes.len()),
            });
        }
        let map: [u8; 4] = bytes[MAGIC_OFFSET..MAGIC_OFFSET + 4].try_into().unwrap();
        if &map != MAP_MAGIC {
            return Err(format(format!("bad map tag {map:?} at byte 208")));
        }
        let machst: [u8; 4] = bytes[STAMP_OFFSET..STAMP_OFFSET + 4].try_into().unwrap();
        let endian = stamp_endian(&machst)
            .ok_or_else(|| format(format!("unrecognized machine stamp {machst:02x?}")))?;
        let r = Reader { bytes, endian };
        let mut labels = [[0u8; 80]; 10];
        for (i, l) in labels.iter_mut().enumerate() {
            l.copy_from_slice(&bytes[224 + 80 * i..224 + 80 * (i + 1)]);
        }
        let header = Self {
            nx: r.i32(0),
            ny: r.i32(4),
            nz: r.i32(8),
            mode: r.i32(12),
            start: r.i32x3(16),
            sampling: r.i32x3(28),
            cell_lengths: r.f32x3(40),
            cell_angles: r.f32x3(52),
            axis_map: r.i32x3(64),
            dmin: r.f32(76),
            dmax: r.f32(80),
            dmean: r.f32(84),
            ispg: r.i32(88),
            nsymbt: r.i32(92),
            extra: bytes[96..196].try_into().unwrap(),
            origin: r.f32x3(196),
            map,
            machst,
            rms: r.f32(216),
            nlabl: r.i32(220),
            labels,
        };
        header.validate(path)?;
        Ok(header)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let format = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if &self.map != MAP_MAGIC {
            return Err(format("missing 'MAP ' tag".into()));
        }
        if self.nx < 1 || self.ny < 1 || self.nz < 1 {
            return Err(format(format!(
                "non-positive dimensions {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if self.mode != MODE_F32 {
            return Err(Error::UnsupportedMode {
                path: path.to_path_buf(),
                mode: self.mode,
            });
        }
        if self.nsymbt < 0 {
            return Err(format(format!("negative extended header size {}", self.nsymbt)));
        }
        if self.axis_map != [1, 2, 3] && self.axis_map != [0, 0, 0] {
            return Err(format(format!(
                "axis order {:?} not supported (expected 1,2,3)",
                self.axis_map
            )));
        }
        Ok(())
    }

    /// Serializes the header little-endian.
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        let mut put = |off: usize, word: [u8; 4]| out[off..off + 4].copy_from_slice(&word);
        for (i, v) in [self.nx, self.ny, self.nz, self.mode].into_iter().enumerate() {
            put(4 * i, v.to_le_bytes());
        }
        for i in 0..3 {
            put(16 + 4 * i, self.start[i].to_le_bytes());
            put(28 + 4 * i, self.sampling[i].to_le_bytes());
            put(40 + 4 * i, self.cell_lengths[i].to_le_bytes());
            put(52 + 4 * i, self.cell_angles[i].to_le_bytes());
            put(64 + 4 * i, self.axis_map[i].to_le_bytes());
            put(196 + 4 * i, self.origin[i].to_le_bytes());
        }
        put(76, self.dmin.to_le_bytes());
        put(80, self.dmax.to_le_bytes());
        put(84, self.dmean.to_le_bytes());
        put(88, self.ispg.to_le_bytes());
        put(92, self.nsymbt.to_le_bytes());
        put(MAGIC_OFFSET, self.map);
        put(STAMP_OFFSET, STAMP_LITTLE);
        put(216, self.rms.to_le_bytes());
        put(220, self.nlabl.to_le_bytes());
        out[96..196].copy_from_slice(&self.extra);
        for (i, l) in self.labels.iter().enumerate() {
            out[224 + 80 * i..224 + 80 * (i + 1)].copy_from_slice(l);
        }
        out
    }
}

fn stamp_endian(stamp: &[u8; 4]) -> Option<Endian> {
    match stamp[0] {
        0x44 | 0x41 => Some(Endian::Little),
        0x11 => Some(Endian::Big),
        _ => None,
    }
}

pub fn read_mrc(path: impl AsRef<Path>) -> Result<Volume3D> {
    read_mrc_with_header(path).map(|(_, v)| v)
}

pub fn read_mrc_with_header(path: impl AsRef<Path>) -> Result<(MrcHeader, Volume3D)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mrc(&bytes, path)
}

/// Decodes a complete in-memory MRC file; `path` is only used in errors.
pub fn decode_mrc(bytes: &[u8], path: &Path) -> Result<(MrcHeader, Volume3D)> {
    let header = MrcHeader::parse(bytes, path)?;
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let dims = header.dims();
    let offset = header.data_offset();
    let expected = dims
        .len()
        .checked_mul(4)
        .ok_or_else(|| corrupt("data section size overflows".into()))?;
    let available = bytes.len().saturating_sub(offset);
    if available != expected {
        return Err(corrupt(format!(
            "data section holds {available} bytes, {dims} mode-2 voxels need {expected}"
        )));
    }
    let section = &bytes[offset..];
    let data: Vec<f32> = match header.endian() {
        Endian::Little => section
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Endian::Big => section
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(corrupt(format!("non-finite value at voxel {:?}", dims.coords(i))));
    }
    let vol = Volume3D::new(dims, data)?;
    Ok((header, vol))
}

/// Encodes `vol` as a little-endian mode-2 MRC file image.
pub fn encode_mrc(vol: &Volume3D) -> Vec<u8> {
    let header = MrcHeader::for_volume(vol);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * vol.len());
    out.extend_from_slice(&header.to_bytes());
    for v in vol.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_mrc(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_mrc(vol);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Source,
    Target,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Source => "source",
            Split::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub volume: PathBuf,
    pub mask: Option<PathBuf>,
}

/// Line-oriented list of dataset volumes.
///
/// Each non-blank line that does not start with `#` reads
/// `<split> <volume path> [<mask path>]`, fields separated by whitespace,
/// with `split` one of `source` or `target`. Relative paths resolve against
/// the manifest's directory. Volume paths must be unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(&e.volume) {
                return Err(Error::invalid(format!(
                    "duplicate manifest path {}",
                    e.volume.display()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, path)
    }

    /// Parses manifest text; `origin` names the source in error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let format = |line: usize, reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason: format!("line {line}: {reason}"),
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(format(i + 1, format!("expected 2 or 3 fields, got {}", fields.len())));
            }
            let split = match fields[0] {
                "source" => Split::Source,
                "target" => Split::Target,
                other => return Err(format(i + 1, format!("unknown split tag '{other}'"))),
            };
            let volume = base.join(fields[1]);
            if !seen.insert(volume.clone()) {
                return Err(format(i + 1, format!("duplicate path {}", fields[1])));
            }
            entries.push(ManifestEntry {
                split,
                volume,
                mask: fields.get(2).map(|m| base.join(m)),
            });
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e.split.as_str());
            out.push('\t');
            out.push_str(&e.volume.to_string_lossy());
            if let Some(m) = &e.mask {
                out.push('\t');
                out.push_str(&m.to_string_lossy());
            }
            out.push('\n');
        }
        out
    }

    pub fn targets(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetSpec {
    pub n_sampled: usize,
    pub seed: u64,
}

impl SubsetSpec {
    pub fn new(n_sampled: usize, seed: u64) -> Result<Self> {
        if n_sampled < 1 {
            return Err(Error::invalid("subset size must be >= 1"));
        }
        Ok(Self { n_sampled, seed })
    }
}

/// Draws a uniform index in `0..bound` from one 64-bit word by widening
/// multiplication (`⌊x·bound / 2⁶⁴⌋`).
#[inline]
fn bounded(x: u64, bound: usize) -> usize {
    ((x as u128 * bound as u128) >> 64) as usize
}

/// Uniform sample without replacement of `n_sampled` target entries.
///
/// Algorithm: list the target entries in manifest order, seed
/// `ChaCha8Rng::seed_from_u64(seed)`, then for `i in 0..n` swap position `i`
/// with position `i + ⌊next_u64()·(M−i) / 2⁶⁴⌋` (partial Fisher–Yates over
/// `M` targets). The first `n` positions are the sample, returned in
/// manifest order.
pub fn sample_subset(manifest: &DatasetManifest, spec: SubsetSpec) -> Result<Vec<PathBuf>> {
    let spec = SubsetSpec::new(spec.n_sampled, spec.seed)?;
    let targets: Vec<&PathBuf> = manifest.targets().map(|e| &e.volume).collect();
    if spec.n_sampled > targets.len() {
        return Err(Error::invalid(format!(
            "cannot sample {} of {} target volumes",
            spec.n_sampled,
            targets.len()
        )));
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.n_sampled {
        let j = i + bounded(rng.next_u64(), targets.len() - i);
        order.swap(i, j);
    }
    let mut picked = order[..spec.n_sampled].to_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| targets[i].clone()).collect())
}
