//! Binary container formats for cubes, matrices and degradation sets.
//!
//! Cube files: magic `HSRC`, version `u16` LE, dims `I, J, K` as `u32`
//! LE, then `8·I·J·K` bytes of `f64` LE in column-major order. Matrix
//! files use magic `HSRM` with `rows, cols`. A degradation file (`HSRD`)
//! carries a text header of parameters followed by the three operator
//! matrices as embedded matrix blocks. All round trips are bit-exact.

use crate::cube::DataCube;
use crate::degradation::{DegradationParams, DegradationSet, Sensor};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use std::path::Path;

pub const CUBE_MAGIC: &[u8; 4] = b"HSRC";
pub const MATRIX_MAGIC: &[u8; 4] = b"HSRM";
pub const DEGRADATION_MAGIC: &[u8; 4] = b"HSRD";
pub const FORMAT_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::TruncatedPayload {
                expected: (self.pos + n) as u64,
                actual: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::BadMagic { expected: name });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = u16::from_le_bytes(self.take(2)?.try_into().unwrap());
        if v != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: v });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    let mut acc: usize = 1;
    for &d in dims {
        acc = acc
            .checked_mul(d)
            .ok_or_else(|| Error::DimOverflow(format!("dimensions {dims:?}")))?;
    }
    // payload byte count must also be addressable
    acc.checked_mul(8)
        .ok_or_else(|| Error::DimOverflow(format!("dimensions {dims:?}")))?;
    Ok(acc)
}

fn push_payload(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn cube_to_bytes(cube: &DataCube) -> Vec<u8> {
    let (i, j, k) = cube.dims();
    let mut out = Vec::with_capacity(4 + 2 + 12 + cube.len() * 8);
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [i, j, k] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    push_payload(&mut out, cube.data());
    out
}

pub fn cube_from_bytes(bytes: &[u8]) -> Result<DataCube> {
    let mut r = Reader::new(bytes);
    let cube = read_cube_block(&mut r)?;
    Ok(cube)
}

fn read_cube_block(r: &mut Reader) -> Result<DataCube> {
    r.magic(CUBE_MAGIC, "HSRC")?;
    r.version()?;
    let i = r.u32()? as usize;
    let j = r.u32()? as usize;
    let k = r.u32()? as usize;
    let count = checked_product(&[i, j, k])?;
    let data = r.payload(count)?;
    DataCube::from_col_major((i, j, k), data)
}

pub fn matrix_to_bytes(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 8 + m.data().len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    push_payload(&mut out, m.data());
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut r = Reader::new(bytes);
    read_matrix_block(&mut r)
}

fn read_matrix_block(r: &mut Reader) -> Result<DenseMatrix> {
    r.magic(MATRIX_MAGIC, "HSRM")?;
    r.version()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let count = checked_product(&[rows, cols])?;
    let data = r.payload(count)?;
    DenseMatrix::from_col_major(rows, cols, data)
}

pub fn degradation_to_bytes(deg: &DegradationSet) -> Vec<u8> {
    let header = format!(
        "d={}\nq={}\nsigma_blur={}\nsensor={}\n",
        deg.params.d,
        deg.params.q,
        deg.params.sigma_blur,
        deg.params.sensor.name()
    );
    let mut out = Vec::new();
    out.extend_from_slice(DEGRADATION_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for m in [&deg.p1, &deg.p2, &deg.pm] {
        out.extend_from_slice(&matrix_to_bytes(m));
    }
    out
}

pub fn degradation_from_bytes(bytes: &[u8]) -> Result<DegradationSet> {
    let mut r = Reader::new(bytes);
    r.magic(DEGRADATION_MAGIC, "HSRD")?;
    r.version()?;
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::InvalidArg("degradation header is not UTF-8".into()))?;
    let mut params = DegradationParams::custom();
    for line in header.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key {
            "d" => {
                params.d = value
                    .parse()
                    .map_err(|_| Error::InvalidArg(format!("bad d={value}")))?
            }
            "q" => {
                params.q = value
                    .parse()
                    .map_err(|_| Error::InvalidArg(format!("bad q={value}")))?
            }
            "sigma_blur" => {
                params.sigma_blur = value
                    .parse()
                    .map_err(|_| Error::InvalidArg(format!("bad sigma_blur={value}")))?
            }
            "sensor" => params.sensor = Sensor::parse(value)?,
            _ => {}
        }
    }
    let p1 = read_matrix_block(&mut r)?;
    let p2 = read_matrix_block(&mut r)?;
    let pm = read_matrix_block(&mut r)?;
    let mut set = DegradationSet::from_parts(p1, p2, pm)?;
    set.params = params;
    Ok(set)
}

pub fn write_cube(path: impl AsRef<Path>, cube: &DataCube) -> Result<()> {
    Ok(std::fs::write(path, cube_to_bytes(cube))?)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<DataCube> {
    cube_from_bytes(&std::fs::read(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    Ok(std::fs::write(path, matrix_to_bytes(m))?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    matrix_from_bytes(&std::fs::read(path)?)
}

pub fn write_degradation(path: impl AsRef<Path>, deg: &DegradationSet) -> Result<()> {
    Ok(std::fs::write(path, degradation_to_bytes(deg))?)
}

pub fn read_degradation(path: impl AsRef<Path>) -> Result<DegradationSet> {
    degradation_from_bytes(&std::fs::read(path)?)
}

/// Convert a raw flat binary (`f64` or `f32`, little-endian, column-major)
/// or a band-stack CSV into a cube.
///
/// The CSV layout is one line per pixel in column-major spatial order,
/// with `K` comma-separated band values per line.
pub fn ingest_bytes(raw: &[u8], format: IngestFormat, dims: (usize, usize, usize)) -> Result<DataCube> {
    let count = checked_product(&[dims.0, dims.1, dims.2])?;
    match format {
        IngestFormat::F64 => {
            if raw.len() != count * 8 {
                return Err(Error::TruncatedPayload {
                    expected: (count * 8) as u64,
                    actual: raw.len() as u64,
                });
            }
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            DataCube::from_col_major(dims, data)
        }
        IngestFormat::F32 => {
            if raw.len() != count * 4 {
                return Err(Error::TruncatedPayload {
                    expected: (count * 4) as u64,
                    actual: raw.len() as u64,
                });
            }
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            DataCube::from_col_major(dims, data)
        }
        IngestFormat::Csv => {
            let text = std::str::from_utf8(raw)
                .map_err(|_| Error::InvalidArg("CSV ingest input is not UTF-8".into()))?;
            let (i, j, k) = dims;
            let mut cube = DataCube::zeros(dims);
            let mut pixels = 0usize;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                if pixels >= i * j {
                    return Err(Error::InvalidArg("CSV has more pixel rows than I*J".into()));
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != k {
                    return Err(Error::InvalidArg(format!(
                        "CSV pixel row {pixels} has {} bands, expected {k}",
                        fields.len()
                    )));
                }
                for (band, field) in fields.iter().enumerate() {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        Error::InvalidArg(format!("bad number {field:?} in CSV ingest"))
                    })?;
                    cube.set(pixels % i, pixels / i, band, v);
                }
                pixels += 1;
            }
            if pixels != i * j {
                return Err(Error::InvalidArg(format!(
                    "CSV has {pixels} pixel rows, expected {}",
                    i * j
                )));
            }
            Ok(cube)
        }
    }
}

/// Input encodings accepted by [`ingest_bytes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestFormat {
    F64,
    F32,
    Csv,
}

impl IngestFormat {
    pub fn parse(s: &str) -> Result<IngestFormat> {
        match s.to_ascii_lowercase().as_str() {
            "f64" => Ok(IngestFormat::F64),
            "f32" => Ok(IngestFormat::F32),
            "csv" => Ok(IngestFormat::Csv),
            other => Err(Error::InvalidArg(format!("unknown ingest format {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::{Sensor, SensorSpec};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cube_round_trip_is_bitwise() {
        let mut rng = StdRng::seed_from_u64(1);
        let cube = DataCube::from_fn((3, 4, 5), |_, _, _| rng.random_range(-1.0..1.0));
        let bytes = cube_to_bytes(&cube);
        let back = cube_from_bytes(&bytes).unwrap();
        assert_eq!(cube, back);
        assert_eq!(bytes, cube_to_bytes(&back));
    }

    #[test]
    fn truncated_cube_reports_byte_counts() {
        let cube = DataCube::from_fn((2, 2, 2), |i, j, k| (i + j + k) as f64);
        let mut bytes = cube_to_bytes(&cube);
        bytes.truncate(bytes.len() - 5);
        match cube_from_bytes(&bytes) {
            Err(Error::TruncatedPayload { expected, actual }) => {
                assert_eq!(expected, 18 + 64);
                assert_eq!(actual, 18 + 64 - 5);
            }
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn version_and_magic_mismatches_are_reported() {
        let cube = DataCube::zeros((1, 1, 1));
        let mut bytes = cube_to_bytes(&cube);
        bytes[4] = 9; // low byte of the version field
        assert!(matches!(
            cube_from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 9 })
        ));
        let mut bytes = cube_to_bytes(&cube);
        bytes[0] = b'X';
        assert!(matches!(cube_from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn matrix_round_trip() {
        let m = DenseMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64 - 2.5);
        let back = matrix_from_bytes(&matrix_to_bytes(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn degradation_round_trip_preserves_operators_and_params() {
        let spec = SensorSpec::new(vec![(1, 4), (5, 8)]);
        let deg =
            DegradationSet::wald((16, 16, 8), 4, 3, 2.0, Sensor::Custom, &spec).unwrap();
        let back = degradation_from_bytes(&degradation_to_bytes(&deg)).unwrap();
        assert_eq!(deg.p1, back.p1);
        assert_eq!(deg.p2, back.p2);
        assert_eq!(deg.pm, back.pm);
        assert_eq!(deg.params, back.params);
    }

    #[test]
    fn ingest_f64_and_f32_round_trip() {
        let mut rng = StdRng::seed_from_u64(2);
        let cube = DataCube::from_fn((3, 2, 2), |_, _, _| rng.random_range(-1.0..1.0));
        let raw: Vec<u8> = cube.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let got = ingest_bytes(&raw, IngestFormat::F64, (3, 2, 2)).unwrap();
        assert_eq!(got, cube);

        let raw32: Vec<u8> = cube
            .data()
            .iter()
            .flat_map(|v| (*v as f32).to_le_bytes())
            .collect();
        let got32 = ingest_bytes(&raw32, IngestFormat::F32, (3, 2, 2)).unwrap();
        assert!(got32.sub(&cube).max_abs() < 1e-6);
    }

    #[test]
    fn ingest_csv_band_stack() {
        // 2x1 spatial grid, 3 bands
        let text = "1.0, 2.0, 3.0\n4.0, 5.0, 6.0\n";
        let cube = ingest_bytes(text.as_bytes(), IngestFormat::Csv, (2, 1, 3)).unwrap();
        assert_eq!(cube.get(0, 0, 0), 1.0);
        assert_eq!(cube.get(1, 0, 2), 6.0);
        assert!(ingest_bytes(text.as_bytes(), IngestFormat::Csv, (2, 2, 3)).is_err());
    }

    proptest! {
        #[test]
        fn cube_round_trip_random(dims in (1usize..5, 1usize..5, 1usize..5),
                                  seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let cube = DataCube::from_fn(dims, |_, _, _| rng.random_range(-1e6..1e6));
            let back = cube_from_bytes(&cube_to_bytes(&cube)).unwrap();
            prop_assert_eq!(cube, back);
        }
    }
}
