//! NIfTI-1 single-file (`.nii`) reader and writer.
//!
//! Both byte orders are accepted on input; output is always little-endian
//! float32 with the sform set from the volume affine.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use nalgebra::{Matrix3, Matrix4};

use super::{VolumeError, VoxelVolume};
use crate::grid::Grid;

pub const NIFTI1_HEADER_SIZE: usize = 348;
const NIFTI2_HEADER_SIZE: i32 = 540;
const DEFAULT_VOX_OFFSET: usize = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

const NIFTI_UNITS_MM: u8 = 2;

/// On-disk voxel types this reader understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl NiftiDatatype {
    pub fn from_code(code: i16) -> Result<Self, VolumeError> {
        Ok(match code {
            2 => Self::Uint8,
            4 => Self::Int16,
            8 => Self::Int32,
            16 => Self::Float32,
            64 => Self::Float64,
            other => return Err(VolumeError::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Self::Uint8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Uint8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => LittleEndian::read_i16(&self.bytes[at..]),
            Endian::Big => BigEndian::read_i16(&self.bytes[at..]),
        }
    }

    fn i32(&self, at: usize) -> i32 {
        match self.endian {
            Endian::Little => LittleEndian::read_i32(&self.bytes[at..]),
            Endian::Big => BigEndian::read_i32(&self.bytes[at..]),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => LittleEndian::read_f32(&self.bytes[at..]),
            Endian::Big => BigEndian::read_f32(&self.bytes[at..]),
        }
    }

    fn f64(&self, at: usize) -> f64 {
        match self.endian {
            Endian::Little => LittleEndian::read_f64(&self.bytes[at..]),
            Endian::Big => BigEndian::read_f64(&self.bytes[at..]),
        }
    }
}

fn detect_endian(bytes: &[u8]) -> Result<Endian, VolumeError> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(VolumeError::Format(
            "gzip-compressed input; decompress the .nii.gz first".into(),
        ));
    }
    if bytes.len() < 4 {
        return Err(VolumeError::Truncated {
            expected: NIFTI1_HEADER_SIZE,
            found: bytes.len(),
        });
    }
    let le = LittleEndian::read_i32(bytes);
    let be = BigEndian::read_i32(bytes);
    if le == NIFTI2_HEADER_SIZE || be == NIFTI2_HEADER_SIZE {
        return Err(VolumeError::Format("NIfTI-2 headers are not supported".into()));
    }
    if le != NIFTI1_HEADER_SIZE as i32 && be != NIFTI1_HEADER_SIZE as i32 {
        return Err(VolumeError::Format(format!(
            "sizeof_hdr is {le} (little-endian) / {be} (big-endian), expected 348"
        )));
    }
    if bytes.len() < NIFTI1_HEADER_SIZE {
        return Err(VolumeError::Truncated {
            expected: NIFTI1_HEADER_SIZE,
            found: bytes.len(),
        });
    }
    // dim[0] must be in 1..=7 in the file's byte order.
    let dim0_le = LittleEndian::read_i16(&bytes[offsets::DIM..]);
    let dim0_be = BigEndian::read_i16(&bytes[offsets::DIM..]);
    if (1..=7).contains(&dim0_le) && le == NIFTI1_HEADER_SIZE as i32 {
        Ok(Endian::Little)
    } else if (1..=7).contains(&dim0_be) && be == NIFTI1_HEADER_SIZE as i32 {
        Ok(Endian::Big)
    } else {
        Err(VolumeError::Format(format!(
            "dim[0] out of range in both byte orders ({dim0_le} / {dim0_be})"
        )))
    }
}

fn quaternion_affine(r: &Reader<'_>, pixdim: [f64; 3], qfac: f64) -> Matrix4<f64> {
    let b = r.f32(offsets::QUATERN_B) as f64;
    let c = r.f32(offsets::QUATERN_B + 4) as f64;
    let d = r.f32(offsets::QUATERN_B + 8) as f64;
    let mut a2 = 1.0 - (b * b + c * c + d * d);
    let (a, b, c, d) = if a2 < 1e-7 {
        // Numerically a 180° rotation: renormalise (b, c, d).
        let n = (b * b + c * c + d * d).sqrt();
        a2 = 0.0;
        (a2, b / n, c / n, d / n)
    } else {
        (a2.sqrt(), b, c, d)
    };
    let rot = Matrix3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a + c * c - b * b - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a + d * d - c * c - b * b,
    );
    let scale = Matrix3::from_diagonal(&nalgebra::Vector3::new(pixdim[0], pixdim[1], qfac * pixdim[2]));
    let linear = rot * scale;
    let mut affine = Matrix4::identity();
    affine.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
    for k in 0..3 {
        affine[(k, 3)] = r.f32(offsets::QOFFSET_X + 4 * k) as f64;
    }
    affine
}

/// Decodes a complete `.nii` byte image.
pub fn parse_nifti(bytes: &[u8]) -> Result<VoxelVolume, VolumeError> {
    let endian = detect_endian(bytes)?;
    let r = Reader { bytes, endian };

    match &bytes[offsets::MAGIC..offsets::MAGIC + 4] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(VolumeError::Format(
                "header/image pairs (.hdr/.img) are not supported; use a single .nii".into(),
            ))
        }
        other => return Err(VolumeError::Format(format!("bad magic {other:?}"))),
    }

    let ndim = r.i16(offsets::DIM) as usize;
    let mut dims = [1usize; 3];
    for (axis, d) in dims.iter_mut().enumerate().take(ndim.min(3)) {
        let v = r.i16(offsets::DIM + 2 * (axis + 1));
        if v < 1 {
            return Err(VolumeError::Format(format!("dim[{}] = {v} is not positive", axis + 1)));
        }
        *d = v as usize;
    }
    for k in 4..=ndim {
        let v = r.i16(offsets::DIM + 2 * k);
        if v > 1 {
            return Err(VolumeError::Format(format!(
                "only 3D volumes are supported (dim[{k}] = {v})"
            )));
        }
    }

    let datatype = NiftiDatatype::from_code(r.i16(offsets::DATATYPE))?;

    let mut pixdim = [1.0f64; 3];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = (r.f32(offsets::PIXDIM + 4 * (k + 1)) as f64).abs();
    }
    let qfac = if r.f32(offsets::PIXDIM) < 0.0 { -1.0 } else { 1.0 };

    let sform_code = r.i16(offsets::SFORM_CODE);
    let qform_code = r.i16(offsets::QFORM_CODE);
    let affine = if sform_code > 0 {
        let mut m = Matrix4::identity();
        for row in 0..3 {
            for col in 0..4 {
                m[(row, col)] = r.f32(offsets::SROW_X + 16 * row + 4 * col) as f64;
            }
        }
        m
    } else if qform_code > 0 {
        quaternion_affine(&r, pixdim, qfac)
    } else {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(pixdim[0], pixdim[1], pixdim[2], 1.0))
    };
    let grid = Grid::new(dims, affine)?;

    let vox_offset = r.f32(offsets::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= NIFTI1_HEADER_SIZE as f32) {
        return Err(VolumeError::Format(format!("invalid vox_offset {vox_offset}")));
    }
    let start = vox_offset as usize;
    let count = grid.len();
    let end = start + count * datatype.size();
    if bytes.len() < end {
        return Err(VolumeError::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    let body = Reader {
        bytes: &bytes[start..end],
        endian,
    };

    let slope = r.f32(offsets::SCL_SLOPE) as f64;
    let inter = r.f32(offsets::SCL_INTER) as f64;
    let scaled = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);

    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let raw = match datatype {
            NiftiDatatype::Uint8 => body.bytes[i] as f64,
            NiftiDatatype::Int16 => body.i16(2 * i) as f64,
            NiftiDatatype::Int32 => body.i32(4 * i) as f64,
            NiftiDatatype::Float32 => body.f32(4 * i) as f64,
            NiftiDatatype::Float64 => body.f64(8 * i),
        };
        let v = if scaled { raw * slope + inter } else { raw };
        data.push(v as f32);
    }
    VoxelVolume::new(grid, data)
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<VoxelVolume, VolumeError> {
    let bytes = std::fs::read(path)?;
    parse_nifti(&bytes)
}

/// Encodes `volume` as a little-endian float32 NIfTI-1 file with sform code 1.
pub fn write_nifti(volume: &VoxelVolume) -> Vec<u8> {
    let dims = volume.dims();
    let spacing = volume.spacing();
    let affine = volume.affine();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + 4 * volume.data().len()];
    let h = &mut out[..];

    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], NIFTI1_HEADER_SIZE as i32);
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * k..], *d);
    }
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], NiftiDatatype::Float32.code());
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], 32);
    let pixdim: [f32; 4] = [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32];
    for (k, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * k..], *p);
    }
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 0.0);
    h[offsets::XYZT_UNITS] = NIFTI_UNITS_MM;
    LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], 0);
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], 1);
    for row in 0..3 {
        for col in 0..4 {
            LittleEndian::write_f32(
                &mut h[offsets::SROW_X + 16 * row + 4 * col..],
                affine[(row, col)] as f32,
            );
        }
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    for (i, v) in volume.data().iter().enumerate() {
        LittleEndian::write_f32(&mut out[DEFAULT_VOX_OFFSET + 4 * i..], *v);
    }
    out
}
