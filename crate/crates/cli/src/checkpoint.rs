//! Little-endian binary checkpoints of a running trajectory.
//!
//! Layout (version 1):
//!
//! ```text
//! magic  b"PLRN"        4 bytes
//! version u8
//! dims u8, dispersion u8, reserved u8
//! n u32, box f64, alpha f64, t f64, phase_e f64, phase_omega f64
//! steps_done u64
//! anchor: t f64, value f64, derivative f64
//! config hash [u8; 32]
//! len u64, then ψ as len × (re f64, im f64), then φ likewise
//! ```

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use polaron_core::adiabatic::PhaseAnchor;
use polaron_core::dynamics::LPState;
use polaron_core::fields::{ElectronField, PhononField};
use polaron_core::grid::{Dispersion, Field, Space, SpectralGrid};

pub const MAGIC: &[u8; 4] = b"PLRN";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: LPState,
    pub anchor: PhaseAnchor,
    pub steps_done: u64,
    pub config_hash: [u8; 32],
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_values(w: &mut Vec<u8>, values: &[Complex64]) {
    for v in values {
        put_f64(w, v.re);
        put_f64(w, v.im);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.pos + n <= self.buf.len(), "checkpoint truncated at byte {}", self.pos);
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn values(&mut self, len: usize) -> Result<Vec<Complex64>> {
        (0..len)
            .map(|_| Ok(Complex64::new(self.f64()?, self.f64()?)))
            .collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let g = s.grid();
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.push(FORMAT_VERSION);
        w.push(g.dims() as u8);
        w.push(match g.dispersion() {
            Dispersion::Spectral => 0,
            Dispersion::NearestNeighbor => 1,
        });
        w.push(0);
        w.extend_from_slice(&(g.points_per_axis() as u32).to_le_bytes());
        for v in [g.box_length(), s.alpha(), s.t, s.phase_e, s.phase_omega] {
            put_f64(&mut w, v);
        }
        w.extend_from_slice(&self.steps_done.to_le_bytes());
        for v in [self.anchor.t, self.anchor.value, self.anchor.derivative] {
            put_f64(&mut w, v);
        }
        w.extend_from_slice(&self.config_hash);
        w.extend_from_slice(&(g.len() as u64).to_le_bytes());
        put_values(&mut w, s.psi.psi().values());
        put_values(&mut w, s.phi.amp().values());
        w
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        ensure!(r.take(4)? == MAGIC, "not a polaron checkpoint");
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            bail!("checkpoint format version {version} is not supported (expected {FORMAT_VERSION})");
        }
        let dims = r.u8()? as usize;
        let dispersion = match r.u8()? {
            0 => Dispersion::Spectral,
            1 => Dispersion::NearestNeighbor,
            d => bail!("unknown dispersion tag {d}"),
        };
        r.u8()?;
        let n = r.u32()? as usize;
        let box_length = r.f64()?;
        let alpha = r.f64()?;
        let t = r.f64()?;
        let phase_e = r.f64()?;
        let phase_omega = r.f64()?;
        let steps_done = r.u64()?;
        let anchor = PhaseAnchor {
            t: r.f64()?,
            value: r.f64()?,
            derivative: r.f64()?,
        };
        let config_hash: [u8; 32] = r.take(32)?.try_into()?;
        let len = r.u64()? as usize;
        let grid = SpectralGrid::new(n, box_length, dims, dispersion)?;
        ensure!(len == grid.len(), "checkpoint holds {len} values for a grid of {}", grid.len());
        let psi = Field::new(&grid, r.values(len)?, Space::Position)?;
        let phi = Field::new(&grid, r.values(len)?, Space::Momentum)?;
        ensure!(r.pos == buf.len(), "trailing bytes after checkpoint payload");
        let mut state = LPState::new(ElectronField::new(psi)?, PhononField::new(phi, alpha)?)?;
        state.t = t;
        state.phase_e = phase_e;
        state.phase_omega = phase_omega;
        Ok(Self {
            state,
            anchor,
            steps_done,
            config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .with_context(|| format!("opening checkpoint {}", path.display()))?
            .read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
