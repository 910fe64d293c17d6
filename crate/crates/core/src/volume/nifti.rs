//! Single-file NIfTI-1 reading and writing (`.nii`, `.nii.gz`).
//!
//! Only little-endian files with datatypes u8, i16, i32, f32 and f64 are
//! supported. Orientation comes from the sform when `sform_code > 0`, else
//! from the qform quaternion, else from `pixdim` alone. Intensity scaling
//! (`scl_slope`/`scl_inter`) is not applied; stored values are returned as-is.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{diagonal_affine, Affine, Dims, LabelMask, Volume, VoxelData};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

mod datatype {
    pub const UINT8: i16 = 2;
    pub const INT16: i16 = 4;
    pub const INT32: i16 = 8;
    pub const FLOAT32: i16 = 16;
    pub const FLOAT64: i16 = 64;
}

/// The parts of a NIfTI-1 header this crate uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: Dims,
    pub channels: usize,
    pub datatype: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: usize,
    pub qform_code: i16,
    pub sform_code: i16,
    pub affine: Affine,
}

impl NiftiHeader {
    pub fn spacing(&self) -> [f64; 3] {
        [self.pixdim[1] as f64, self.pixdim[2] as f64, self.pixdim[3] as f64]
    }

    fn element_size(&self) -> usize {
        match self.datatype {
            datatype::UINT8 => 1,
            datatype::INT16 => 2,
            datatype::INT32 | datatype::FLOAT32 => 4,
            _ => 8,
        }
    }

    fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_SIZE {
            return Err(Error::MalformedFile(format!(
                "header truncated at {} of {HEADER_SIZE} bytes",
                buf.len()
            )));
        }
        let le = LittleEndian::read_i32(&buf[offset::SIZEOF_HDR..]);
        if le != HEADER_SIZE as i32 {
            if le.swap_bytes() == HEADER_SIZE as i32 {
                return Err(Error::MalformedFile("big-endian NIfTI is not supported".into()));
            }
            return Err(Error::MalformedFile(format!("sizeof_hdr is {le}, expected 348")));
        }
        if &buf[offset::MAGIC..offset::MAGIC + 4] != b"n+1\0" {
            return Err(Error::MalformedFile(format!(
                "magic {:?} is not single-file NIfTI-1 \"n+1\"",
                String::from_utf8_lossy(&buf[offset::MAGIC..offset::MAGIC + 3])
            )));
        }

        let mut dim = [0i16; 8];
        LittleEndian::read_i16_into(&buf[offset::DIM..offset::DIM + 16], &mut dim);
        let ndim = dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::MalformedFile(format!("dim[0] = {ndim} out of range")));
        }
        let extent = |axis: usize| -> Result<usize> {
            if axis > ndim as usize {
                return Ok(1);
            }
            match dim[axis] {
                n if n >= 1 => Ok(n as usize),
                n => Err(Error::MalformedFile(format!("dim[{axis}] = {n}"))),
            }
        };
        let dims = Dims([extent(1)?, extent(2)?, extent(3)?]);
        let channels = extent(4)?;
        for axis in 5..=7 {
            if extent(axis)? != 1 {
                return Err(Error::MalformedFile("dimensions beyond the fourth are not supported".into()));
            }
        }

        let datatype = LittleEndian::read_i16(&buf[offset::DATATYPE..]);
        let expected_bits = match datatype {
            datatype::UINT8 => 8,
            datatype::INT16 => 16,
            datatype::INT32 | datatype::FLOAT32 => 32,
            datatype::FLOAT64 => 64,
            other => return Err(Error::UnsupportedDatatype(other)),
        };
        let bitpix = LittleEndian::read_i16(&buf[offset::BITPIX..]);
        if bitpix != expected_bits {
            return Err(Error::MalformedFile(format!(
                "bitpix {bitpix} inconsistent with datatype {datatype}"
            )));
        }

        let mut pixdim = [0f32; 8];
        LittleEndian::read_f32_into(&buf[offset::PIXDIM..offset::PIXDIM + 32], &mut pixdim);
        let vox_offset = LittleEndian::read_f32(&buf[offset::VOX_OFFSET..]);
        if vox_offset.is_nan() || vox_offset < HEADER_SIZE as f32 || vox_offset.fract() != 0.0 {
            return Err(Error::MalformedFile(format!("vox_offset {vox_offset} invalid")));
        }

        let qform_code = LittleEndian::read_i16(&buf[offset::QFORM_CODE..]);
        let sform_code = LittleEndian::read_i16(&buf[offset::SFORM_CODE..]);
        let spacing = [pixdim[1] as f64, pixdim[2] as f64, pixdim[3] as f64];
        let affine = if sform_code > 0 {
            let mut rows = [0f32; 12];
            LittleEndian::read_f32_into(&buf[offset::SROW_X..offset::SROW_X + 48], &mut rows);
            let mut a = [[0.0; 4]; 3];
            for (r, row) in a.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = rows[r * 4 + c] as f64;
                }
            }
            a
        } else if qform_code > 0 {
            let mut q = [0f32; 6];
            LittleEndian::read_f32_into(&buf[offset::QUATERN_B..offset::QOFFSET_X + 12], &mut q);
            qform_affine(q, pixdim[0], spacing)
        } else {
            diagonal_affine(spacing)
        };

        Ok(NiftiHeader {
            dims,
            channels,
            datatype,
            pixdim,
            vox_offset: vox_offset as usize,
            qform_code,
            sform_code,
            affine,
        })
    }
}

/// Quaternion orientation (b, c, d, qoffset x/y/z) to a voxel-to-world affine.
fn qform_affine(q: [f32; 6], qfac: f32, spacing: [f64; 3]) -> Affine {
    let [b, c, d] = [q[0] as f64, q[1] as f64, q[2] as f64];
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let qfac = if qfac < 0.0 { -1.0 } else { 1.0 };
    let scale = [spacing[0], spacing[1], spacing[2] * qfac];
    let mut out = [[0.0; 4]; 3];
    for row in 0..3 {
        for col in 0..3 {
            out[row][col] = r[row][col] * scale[col];
        }
        out[row][3] = q[3 + row] as f64;
    }
    out
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    file.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == GZIP_MAGIC {
        Ok(Box::new(MultiGzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn read_fully(reader: &mut dyn Read, path: &Path, limit: Option<u64>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let result = match limit {
        Some(n) => reader.take(n).read_to_end(&mut buf),
        None => reader.read_to_end(&mut buf),
    };
    match result {
        Ok(_) => Ok(buf),
        Err(e) if e.kind() == std::io::ErrorKind::InvalidInput || e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Err(Error::MalformedFile(format!("{}: corrupt stream: {e}", path.display())))
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Read only the header of a NIfTI-1 file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let buf = read_fully(&mut *reader, path, Some(HEADER_SIZE as u64))?;
    NiftiHeader::parse(&buf)
}

/// Read a NIfTI-1 image. A fourth dimension becomes the channel axis.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let bytes = read_fully(&mut *reader, path, None)?;
    let header = NiftiHeader::parse(&bytes)?;
    let count = header.dims.len() * header.channels;
    let needed = header.vox_offset + count * header.element_size();
    if bytes.len() < needed {
        return Err(Error::MalformedFile(format!(
            "{}: data truncated ({} of {needed} bytes)",
            path.display(),
            bytes.len()
        )));
    }
    let raw = &bytes[header.vox_offset..needed];
    let data = match header.datatype {
        datatype::UINT8 => VoxelData::U8(raw.to_vec()),
        datatype::INT16 => {
            let mut v = vec![0i16; count];
            LittleEndian::read_i16_into(raw, &mut v);
            VoxelData::I16(v)
        }
        datatype::INT32 => {
            let mut v = vec![0i32; count];
            LittleEndian::read_i32_into(raw, &mut v);
            VoxelData::I32(v)
        }
        datatype::FLOAT32 => {
            let mut v = vec![0f32; count];
            LittleEndian::read_f32_into(raw, &mut v);
            VoxelData::F32(v)
        }
        datatype::FLOAT64 => {
            let mut v = vec![0f64; count];
            LittleEndian::read_f64_into(raw, &mut v);
            VoxelData::F64(v)
        }
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    Volume::new(header.dims, header.spacing(), header.affine, header.channels, data)
        .map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))
}

/// Read a single-channel integer label map.
pub fn read_label_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    read_nifti(path)?.to_label_mask()
}

fn encode_header(v: &Volume) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; VOX_OFFSET];
    let (code, bits) = match v.data() {
        VoxelData::U8(_) => (datatype::UINT8, 8),
        VoxelData::I16(_) => (datatype::INT16, 16),
        VoxelData::I32(_) => (datatype::INT32, 32),
        VoxelData::F32(_) => (datatype::FLOAT32, 32),
        VoxelData::F64(_) => (datatype::FLOAT64, 64),
    };
    let shape = v.shape();
    let mut dim = [1i16; 8];
    dim[0] = if v.channels() > 1 { 4 } else { 3 };
    for (axis, &n) in shape.iter().chain(std::iter::once(&v.channels())).enumerate() {
        dim[axis + 1] = i16::try_from(n)
            .map_err(|_| Error::InvalidVolume(format!("extent {n} exceeds the NIfTI-1 limit")))?;
    }
    let spacing = v.spacing();
    let pixdim = [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 1.0, 1.0, 1.0, 1.0];

    LittleEndian::write_i32(&mut buf[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
    LittleEndian::write_i16_into(&dim, &mut buf[offset::DIM..offset::DIM + 16]);
    LittleEndian::write_i16(&mut buf[offset::DATATYPE..], code);
    LittleEndian::write_i16(&mut buf[offset::BITPIX..], bits);
    LittleEndian::write_f32_into(&pixdim, &mut buf[offset::PIXDIM..offset::PIXDIM + 32]);
    LittleEndian::write_f32(&mut buf[offset::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut buf[offset::SCL_SLOPE..], 1.0);
    // mm + seconds
    buf[offset::XYZT_UNITS] = 2 | 8;
    LittleEndian::write_i16(&mut buf[offset::SFORM_CODE..], 1);
    let rows: Vec<f32> = v.affine().iter().flatten().map(|&x| x as f32).collect();
    LittleEndian::write_f32_into(&rows, &mut buf[offset::SROW_X..offset::SROW_X + 48]);
    buf[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(b"n+1\0");
    Ok(buf)
}

fn write_payload<W: Write>(w: &mut W, v: &Volume) -> std::io::Result<()> {
    w.write_all(&encode_header(v).map_err(std::io::Error::other)?)?;
    match v.data() {
        VoxelData::U8(d) => w.write_all(d),
        VoxelData::I16(d) => d.iter().try_for_each(|&x| w.write_i16::<LittleEndian>(x)),
        VoxelData::I32(d) => d.iter().try_for_each(|&x| w.write_i32::<LittleEndian>(x)),
        VoxelData::F32(d) => d.iter().try_for_each(|&x| w.write_f32::<LittleEndian>(x)),
        VoxelData::F64(d) => d.iter().try_for_each(|&x| w.write_f64::<LittleEndian>(x)),
    }
}

/// Write a volume. Paths ending in `.gz` are gzip-compressed.
pub fn write_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    // Surface geometry errors before touching the filesystem.
    encode_header(v)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let result = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        write_payload(&mut enc, v).and_then(|_| enc.finish()?.flush())
    } else {
        let mut w = BufWriter::new(file);
        write_payload(&mut w, v).and_then(|_| w.flush())
    };
    result.map_err(|e| Error::io(path, e))
}

/// Write a label map as u8 when every label fits, i32 otherwise.
pub fn write_label_mask(m: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&m.to_volume(), path)
}
