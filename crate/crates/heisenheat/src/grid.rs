//! Uniform truncated grids over `H^1` and sampled fields on them.

use std::io::{self, Read, Write};
use thiserror::Error;

const SNAPSHOT_MAGIC: u64 = 0x0044_4c46_5349_4548; // "HEISFLD\0" little-endian
const SNAPSHOT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid specs differ")]
    SpecMismatch,
    #[error("non-finite field value at index {0}")]
    NonFinite(usize),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Symmetric box `[-Rx,Rx] x [-Ry,Ry] x [-Rtau,Rtau]` with odd point counts,
/// so the origin is a grid node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub rx: f64,
    pub ry: f64,
    pub rtau: f64,
    pub nx: usize,
    pub ny: usize,
    pub ntau: usize,
}

impl GridSpec {
    pub fn new(rx: f64, ry: f64, rtau: f64, nx: usize, ny: usize, ntau: usize) -> Self {
        assert!(rx > 0.0 && ry > 0.0 && rtau > 0.0);
        assert!(
            nx % 2 == 1 && ny % 2 == 1 && ntau % 2 == 1,
            "point counts must be odd so the grid is symmetric about the origin"
        );
        assert!(nx >= 3 && ny >= 3 && ntau >= 3);
        GridSpec {
            rx,
            ry,
            rtau,
            nx,
            ny,
            ntau,
        }
    }

    /// Desk-scale default for unit-time runs.
    pub fn default_desk() -> Self {
        GridSpec::new(6.0, 6.0, 24.0, 97, 97, 193)
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        2.0 * self.rx / (self.nx - 1) as f64
    }
    #[inline]
    pub fn hy(&self) -> f64 {
        2.0 * self.ry / (self.ny - 1) as f64
    }
    #[inline]
    pub fn htau(&self) -> f64 {
        2.0 * self.rtau / (self.ntau - 1) as f64
    }
    pub fn h_min(&self) -> f64 {
        self.hx().min(self.hy()).min(self.htau())
    }
    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy() * self.htau()
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.ntau
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn x_at(&self, i: usize) -> f64 {
        -self.rx + i as f64 * self.hx()
    }
    #[inline]
    pub fn y_at(&self, j: usize) -> f64 {
        -self.ry + j as f64 * self.hy()
    }
    #[inline]
    pub fn tau_at(&self, k: usize) -> f64 {
        -self.rtau + k as f64 * self.htau()
    }

    /// Row-major index over `(x, y, tau)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.ntau + k
    }

    pub fn center_index(&self) -> usize {
        self.idx(self.nx / 2, self.ny / 2, self.ntau / 2)
    }

    /// Grid dilated by `lambda`: box scaled anisotropically, same node counts.
    pub fn dilated(&self, lambda: f64) -> GridSpec {
        GridSpec::new(
            lambda * self.rx,
            lambda * self.ry,
            lambda * lambda * self.rtau,
            self.nx,
            self.ny,
            self.ntau,
        )
    }
}

/// A sampled function on a [`GridSpec`], row-major over `(x, y, tau)`.
#[derive(Clone, Debug)]
pub struct Field {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(spec: GridSpec) -> Self {
        Field {
            values: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(spec: GridSpec, f: F) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..spec.nx {
            let x = spec.x_at(i);
            for j in 0..spec.ny {
                let y = spec.y_at(j);
                for k in 0..spec.ntau {
                    values.push(f(x, y, spec.tau_at(k)));
                }
            }
        }
        Field { spec, values }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            spec: self.spec,
            values: self.values.iter().map(|v| factor * v).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Field, factor: f64) {
        assert_eq!(self.spec, other.spec);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    /// Pointwise `p`-th power, for nonnegative fields.
    pub fn powf(&self, p: f64) -> Field {
        Field {
            spec: self.spec,
            values: self.values.iter().map(|v| v.max(0.0).powf(p)).collect(),
        }
    }

    /// Trilinear interpolation at physical coordinates, zero outside the box.
    pub fn interp(&self, x: f64, y: f64, tau: f64) -> f64 {
        let s = &self.spec;
        let fx = (x + s.rx) / s.hx();
        let fy = (y + s.ry) / s.hy();
        let ft = (tau + s.rtau) / s.htau();
        if fx < 0.0 || fy < 0.0 || ft < 0.0 {
            return 0.0;
        }
        let (mut i0, mut j0, mut k0) = (fx.floor() as usize, fy.floor() as usize, ft.floor() as usize);
        // clamp exact upper-edge hits into the last cell instead of dropping
        // them to the outside value
        let clamp = |i0: &mut usize, f: f64, n: usize| -> bool {
            if *i0 + 1 >= n {
                if f <= (n - 1) as f64 + 1e-9 {
                    *i0 = n - 2;
                    true
                } else {
                    false
                }
            } else {
                true
            }
        };
        if !clamp(&mut i0, fx, s.nx) || !clamp(&mut j0, fy, s.ny) || !clamp(&mut k0, ft, s.ntau) {
            return 0.0;
        }
        let (wx, wy, wt) = (fx - i0 as f64, fy - j0 as f64, ft - k0 as f64);
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - wx), (1, wx)] {
            for (dj, wj) in [(0, 1.0 - wy), (1, wy)] {
                for (dk, wk) in [(0, 1.0 - wt), (1, wt)] {
                    acc += wi * wj * wk * self.values[s.idx(i0 + di, j0 + dj, k0 + dk)];
                }
            }
        }
        acc
    }

    /// Binary snapshot: all-64-bit little-endian header
    /// `(magic, version, nx, ny, ntau, rx, ry, rtau)` then row-major values.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), GridError> {
        let s = &self.spec;
        for v in [
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            s.nx as u64,
            s.ny as u64,
            s.ntau as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [s.rx, s.ry, s.rtau] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Field, GridError> {
        let mut buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64, GridError> {
            r.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        if read_u64(r)? != SNAPSHOT_MAGIC {
            return Err(GridError::Format("bad magic".into()));
        }
        if read_u64(r)? != SNAPSHOT_VERSION {
            return Err(GridError::Format("unsupported version".into()));
        }
        let nx = read_u64(r)? as usize;
        let ny = read_u64(r)? as usize;
        let ntau = read_u64(r)? as usize;
        let mut fbuf = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64, GridError> {
            r.read_exact(&mut fbuf)?;
            Ok(f64::from_le_bytes(fbuf))
        };
        let rx = read_f64(r)?;
        let ry = read_f64(r)?;
        let rtau = read_f64(r)?;
        let spec = GridSpec::new(rx, ry, rtau, nx, ny, ntau);
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            values.push(read_f64(r)?);
        }
        Ok(Field { spec, values })
    }

    /// CSV export with header `x,y,tau,value`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), GridError> {
        writeln!(w, "x,y,tau,value")?;
        let s = &self.spec;
        for i in 0..s.nx {
            for j in 0..s.ny {
                for k in 0..s.ntau {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        s.x_at(i),
                        s.y_at(j),
                        s.tau_at(k),
                        self.values[s.idx(i, j, k)]
                    )?;
                }
            }
        }
        Ok(())
    }
}
