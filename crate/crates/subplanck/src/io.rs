//! Binary grid files, CSV decay curves, and checksums.
//!
//! Wavefunctions persist as PSIGRID1, density matrices as RHOGRID1, and
//! Wigner grids as WIGGRID1. Each file is an 8-byte magic, a u32 format
//! version, the grid dimensions and geometry, then the payload, all
//! little-endian. Readers check the length implied by the header against
//! the real file before touching the payload and report the byte offset
//! of the first inconsistency. Values reload bit-for-bit.
//!
//! Decay curves are written as CSV with shortest round-trip decimal
//! formatting, one row per sampled displacement.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::error::{Result, SubplanckError};
use crate::grid::{DensityMatrix, GridSpec, WaveFunction};
use crate::wigner::{ScanPoint, WignerGrid};

const FORMAT_VERSION: u32 = 1;
const PSI_MAGIC: &[u8; 8] = b"PSIGRID1";
const RHO_MAGIC: &[u8; 8] = b"RHOGRID1";
const WIG_MAGIC: &[u8; 8] = b"WIGGRID1";

fn format_err(offset: u64, detail: impl Into<String>) -> SubplanckError {
    SubplanckError::Format {
        offset,
        detail: detail.into(),
    }
}

struct HeaderReader {
    inner: BufReader<File>,
    offset: u64,
    file_len: u64,
}

impl HeaderReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        Ok(Self {
            inner: BufReader::new(file),
            offset: 0,
            file_len,
        })
    }

    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                format_err(at, format!("file ends inside {what}"))
            } else {
                SubplanckError::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn magic(&mut self, expect: &[u8; 8]) -> Result<()> {
        let mut m = [0u8; 8];
        self.take(&mut m, "the magic bytes")?;
        if &m != expect {
            return Err(format_err(
                0,
                format!(
                    "magic {:?} is not {:?}",
                    String::from_utf8_lossy(&m),
                    String::from_utf8_lossy(expect)
                ),
            ));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let at = self.offset;
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(format_err(
                at,
                format!("unsupported format version {v}, expected {FORMAT_VERSION}"),
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b, "the format version")?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    /// Checks that the file holds exactly `values` f64 payload entries
    /// after the header, then reads and decodes them. Finiteness is
    /// enforced here so a corrupt byte pattern is reported by offset
    /// instead of surfacing later as NaN physics.
    fn payload(&mut self, values: u64) -> Result<Vec<f64>> {
        let expected = values
            .checked_mul(8)
            .and_then(|b| b.checked_add(self.offset))
            .ok_or_else(|| {
                format_err(
                    self.offset,
                    format!("header promises {values} values, more than any file can hold"),
                )
            })?;
        if self.file_len < expected {
            return Err(format_err(
                self.file_len,
                format!(
                    "file ends inside the payload ({} bytes, header needs {expected})",
                    self.file_len
                ),
            ));
        }
        if self.file_len > expected {
            return Err(format_err(
                expected,
                format!(
                    "{} trailing bytes after the payload",
                    self.file_len - expected
                ),
            ));
        }
        let start = self.offset;
        let mut bytes = vec![0u8; values as usize * 8];
        self.take(&mut bytes, "the payload")?;
        let mut out = Vec::with_capacity(values as usize);
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(format_err(
                    start + 8 * i as u64,
                    format!("non-finite payload value {v}"),
                ));
            }
            out.push(v);
        }
        Ok(out)
    }
}

fn complex_pairs(raw: Vec<f64>) -> Vec<C64> {
    raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
}

fn grid_from_header(reader: &mut HeaderReader) -> Result<(GridSpec, u64)> {
    let dims_at = reader.offset;
    let n = reader.u64("the grid size")?;
    let x_min = reader.f64("the grid origin")?;
    let dx = reader.f64("the grid spacing")?;
    let hbar = reader.f64("hbar")?;
    let grid = GridSpec::new(n as usize, x_min, dx, hbar)
        .map_err(|e| format_err(dims_at, e.to_string()))?;
    Ok((grid, n))
}

/// Writes `psi` in the PSIGRID1 layout.
pub fn write_wavefunction(path: &Path, psi: &WaveFunction) -> Result<()> {
    let g = psi.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PSI_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    for v in [g.x_min(), g.dx(), g.hbar()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for a in psi.amp() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a PSIGRID1 file back into a [`WaveFunction`].
pub fn read_wavefunction(path: &Path) -> Result<WaveFunction> {
    let mut r = HeaderReader::open(path)?;
    r.magic(PSI_MAGIC)?;
    r.version()?;
    let (grid, n) = grid_from_header(&mut r)?;
    let raw = r.payload(2 * n)?;
    WaveFunction::new(grid, complex_pairs(raw))
}

/// Writes `rho` in the RHOGRID1 layout, row-major complex entries.
pub fn write_density(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let g = rho.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(RHO_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    for v in [g.x_min(), g.dx(), g.hbar()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for a in rho.matrix().iter() {
        w.write_all(&a.re.to_le_bytes())?;
        w.write_all(&a.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an RHOGRID1 file back into a [`DensityMatrix`].
pub fn read_density(path: &Path) -> Result<DensityMatrix> {
    let mut r = HeaderReader::open(path)?;
    r.magic(RHO_MAGIC)?;
    r.version()?;
    let (grid, n) = grid_from_header(&mut r)?;
    let entries = n.checked_mul(n).and_then(|e| e.checked_mul(2)).ok_or_else(
        || format_err(12, format!("density dimension {n} overflows the format")),
    )?;
    let raw = r.payload(entries)?;
    let matrix = Array2::from_shape_vec((n as usize, n as usize), complex_pairs(raw))
        .expect("payload length was checked against the header");
    DensityMatrix::new(grid, matrix)
}

/// Writes `w` in the WIGGRID1 layout, x-major rows of f64 samples.
pub fn write_wigner(path: &Path, grid: &WignerGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(WIG_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.n_x() as u64).to_le_bytes())?;
    w.write_all(&(grid.n_p() as u64).to_le_bytes())?;
    for v in [
        grid.x_min(),
        grid.dx(),
        grid.p_min(),
        grid.dp(),
        grid.hbar(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in grid.values().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a WIGGRID1 file back into a [`WignerGrid`].
pub fn read_wigner(path: &Path) -> Result<WignerGrid> {
    let mut r = HeaderReader::open(path)?;
    r.magic(WIG_MAGIC)?;
    r.version()?;
    let dims_at = r.offset;
    let n_x = r.u64("the x dimension")?;
    let n_p = r.u64("the p dimension")?;
    let x_min = r.f64("the x origin")?;
    let dx = r.f64("the x spacing")?;
    let p_min = r.f64("the p origin")?;
    let dp = r.f64("the p spacing")?;
    let hbar = r.f64("hbar")?;
    let entries = n_x.checked_mul(n_p).ok_or_else(|| {
        format_err(
            dims_at,
            format!("dimensions {n_x} x {n_p} overflow the format"),
        )
    })?;
    let raw = r.payload(entries)?;
    let values = Array2::from_shape_vec((n_x as usize, n_p as usize), raw)
        .expect("payload length was checked against the header");
    WignerGrid::from_parts(
        n_x as usize,
        n_p as usize,
        x_min,
        dx,
        p_min,
        dp,
        hbar,
        values,
    )
    .map_err(|e| format_err(dims_at, e.to_string()))
}

const DECAY_HEADER: &str = "delta_x,delta_p,overlap_abs,overlap_re,overlap_im";

/// Writes a decay curve as CSV. Rust's shortest round-trip formatting
/// means a reloaded curve reproduces every written value exactly.
pub fn write_decay_csv(path: &Path, points: &[ScanPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{DECAY_HEADER}")?;
    for pt in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            pt.delta_x,
            pt.delta_p,
            pt.overlap().norm(),
            pt.overlap_re,
            pt.overlap_im
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a decay-curve CSV back into scan points. The magnitude column is
/// recomputed from the displacement components; the redundant absolute
/// value is checked against the stored real and imaginary parts.
pub fn read_decay_csv(path: &Path) -> Result<Vec<ScanPoint>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut offset = 0u64;
    r.read_line(&mut line)?;
    if line.trim_end() != DECAY_HEADER {
        return Err(format_err(
            0,
            format!("header {:?} is not {DECAY_HEADER:?}", line.trim_end()),
        ));
    }
    let mut points = Vec::new();
    loop {
        offset += line.len() as u64;
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(points);
        }
        let row = line.trim_end();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(format_err(
                offset,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| format_err(offset, format!("unreadable number {field:?}")))?;
        }
        let [delta_x, delta_p, abs, re, im] = nums;
        let from_parts = f64::hypot(re, im);
        if (abs - from_parts).abs() > 1e-9 * from_parts.max(1.0) {
            return Err(format_err(
                offset,
                format!("overlap_abs {abs} disagrees with |{re} + {im}i|"),
            ));
        }
        points.push(ScanPoint {
            delta_x,
            delta_p,
            magnitude: f64::hypot(delta_x, delta_p),
            overlap_re: re,
            overlap_im: im,
        });
    }
}

/// SHA-256 of a file's bytes as lowercase hex, for output manifests.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::decay_scan;
    use crate::grid::{build_density, PhaseSpaceDirection, State};
    use crate::states::{make_cat, make_gaussian, GaussianPacket};
    use crate::wigner::wigner_of_psi;

    const HBAR: f64 = 0.16;

    fn grid(n: usize) -> GridSpec {
        GridSpec::centered(n, 16.0, HBAR).unwrap()
    }

    fn corrupt(path: &Path, offset: u64) -> std::path::PathBuf {
        let mut bytes = std::fs::read(path).unwrap();
        bytes[offset as usize] ^= 0xff;
        let twin = path.with_extension("corrupt");
        std::fs::write(&twin, bytes).unwrap();
        twin
    }

    #[test]
    fn wavefunction_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.psigrid");
        let psi = make_cat(2.5, 0.4, &grid(256)).unwrap();
        write_wavefunction(&path, &psi).unwrap();

        let expected = 8 + 4 + 8 + 3 * 8 + 256 * 16;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expected);

        let back = read_wavefunction(&path).unwrap();
        assert_eq!(back.grid(), psi.grid());
        for (a, b) in back.amp().iter().zip(psi.amp()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn density_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mix.rhogrid");
        let g = grid(128);
        let a = make_gaussian(&GaussianPacket::new(-1.0, 0.3, 0.4), &g).unwrap();
        let b = make_gaussian(&GaussianPacket::new(1.2, -0.5, 0.4), &g).unwrap();
        let rho = build_density(&[(0.6, &a), (0.4, &b)]).unwrap();
        write_density(&path, &rho).unwrap();

        let back = read_density(&path).unwrap();
        assert_eq!(back.grid(), rho.grid());
        for (x, y) in back.matrix().iter().zip(rho.matrix().iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn wigner_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vac.wiggrid");
        let psi = make_gaussian(&GaussianPacket::new(0.5, -0.2, 0.4), &grid(128)).unwrap();
        let w = wigner_of_psi(&psi);
        write_wigner(&path, &w).unwrap();

        let back = read_wigner(&path).unwrap();
        assert_eq!(back.n_x(), w.n_x());
        assert_eq!(back.n_p(), w.n_p());
        assert_eq!(back.x_min().to_bits(), w.x_min().to_bits());
        assert_eq!(back.dx().to_bits(), w.dx().to_bits());
        assert_eq!(back.p_min().to_bits(), w.p_min().to_bits());
        assert_eq!(back.dp().to_bits(), w.dp().to_bits());
        assert_eq!(back.hbar().to_bits(), w.hbar().to_bits());
        for (x, y) in back.values().iter().zip(w.values().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn corrupt_files_are_rejected_by_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.psigrid");
        let psi = make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid(64)).unwrap();
        write_wavefunction(&path, &psi).unwrap();

        let bad_magic = corrupt(&path, 3);
        match read_wavefunction(&bad_magic) {
            Err(SubplanckError::Format { offset: 0, .. }) => {}
            other => panic!("bad magic gave {other:?}"),
        }

        let bad_version = corrupt(&path, 9);
        match read_wavefunction(&bad_version) {
            Err(SubplanckError::Format { offset: 8, detail }) => {
                assert!(detail.contains("version"), "{detail}");
            }
            other => panic!("bad version gave {other:?}"),
        }

        match read_wigner(&path) {
            Err(SubplanckError::Format { offset: 0, .. }) => {}
            other => panic!("wrong reader gave {other:?}"),
        }

        let bytes = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("short.psigrid");
        std::fs::write(&truncated, &bytes[..bytes.len() - 8]).unwrap();
        match read_wavefunction(&truncated) {
            Err(SubplanckError::Format { offset, detail }) => {
                assert_eq!(offset, bytes.len() as u64 - 8);
                assert!(detail.contains("ends inside"), "{detail}");
            }
            other => panic!("truncation gave {other:?}"),
        }

        let padded = dir.path().join("long.psigrid");
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&padded, extra).unwrap();
        match read_wavefunction(&padded) {
            Err(SubplanckError::Format { offset, detail }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(detail.contains("trailing"), "{detail}");
            }
            other => panic!("padding gave {other:?}"),
        }

        let poisoned = dir.path().join("nan.psigrid");
        let mut nan = bytes.clone();
        let value_at = 44 + 16 * 10;
        nan[value_at..value_at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&poisoned, nan).unwrap();
        match read_wavefunction(&poisoned) {
            Err(SubplanckError::Format { offset, detail }) => {
                assert_eq!(offset, value_at as u64);
                assert!(detail.contains("non-finite"), "{detail}");
            }
            other => panic!("NaN payload gave {other:?}"),
        }

        let bomb = dir.path().join("bomb.psigrid");
        let mut huge = bytes[..44].to_vec();
        huge[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&bomb, huge).unwrap();
        match read_wavefunction(&bomb) {
            Err(SubplanckError::Format { .. }) => {}
            other => panic!("oversized header gave {other:?}"),
        }
    }

    #[test]
    fn decay_csv_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decay.csv");
        let psi = make_cat(2.0, 0.4, &grid(256)).unwrap();
        let scan = decay_scan(
            &State::Pure(psi),
            &PhaseSpaceDirection::along_p(),
            0.5,
            32,
        )
        .unwrap();
        write_decay_csv(&path, &scan).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(DECAY_HEADER));
        assert_eq!(text.lines().count(), scan.len() + 1);

        let back = read_decay_csv(&path).unwrap();
        assert_eq!(back.len(), scan.len());
        for (a, b) in back.iter().zip(&scan) {
            assert_eq!(a.delta_x.to_bits(), b.delta_x.to_bits());
            assert_eq!(a.delta_p.to_bits(), b.delta_p.to_bits());
            assert_eq!(a.overlap_re.to_bits(), b.overlap_re.to_bits());
            assert_eq!(a.overlap_im.to_bits(), b.overlap_im.to_bits());
            assert!((a.magnitude - b.magnitude).abs() < 1e-12);
        }

        let mangled = dir.path().join("mangled.csv");
        std::fs::write(&mangled, "delta_x,delta_p\n").unwrap();
        assert!(matches!(
            read_decay_csv(&mangled),
            Err(SubplanckError::Format { offset: 0, .. })
        ));

        let header = format!("{DECAY_HEADER}\n");
        let short_row = format!("{header}0.1,0.2,1.0\n");
        std::fs::write(&mangled, &short_row).unwrap();
        match read_decay_csv(&mangled) {
            Err(SubplanckError::Format { offset, .. }) => {
                assert_eq!(offset, header.len() as u64);
            }
            other => panic!("short row gave {other:?}"),
        }

        let lying = format!("{header}0.1,0.2,5.0,0.3,0.4\n");
        std::fs::write(&mangled, lying).unwrap();
        assert!(matches!(
            read_decay_csv(&mangled),
            Err(SubplanckError::Format { .. })
        ));
    }

    #[test]
    fn checksums_are_stable_and_content_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sum.psigrid");
        let psi = make_gaussian(&GaussianPacket::new(0.0, 0.0, 0.4), &grid(64)).unwrap();
        write_wavefunction(&path, &psi).unwrap();

        let first = file_sha256(&path).unwrap();
        write_wavefunction(&path, &psi).unwrap();
        assert_eq!(file_sha256(&path).unwrap(), first);
        assert_eq!(first.len(), 64);

        let twin = corrupt(&path, 50);
        assert_ne!(file_sha256(&twin).unwrap(), first);
    }
}
