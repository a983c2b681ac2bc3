//! Versioned binary snapshots for field states and trajectory blocks.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  8 bytes  "SYNTRB01"
//! kind   u16      1 = field state, 2 = trajectory block
//! ver    u16      format version, currently 1
//! ...    kind-specific header, then payload arrays
//! ```
//!
//! Field states store the spectrum parameters, band, layout, seed, time,
//! and both amplitude branches, enough to rebuild the realization exactly.
//! Trajectory blocks store a pair ensemble without its drift record.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{ModeLayout, ModeSet, SpectralField};
use crate::pairs::PairEnsemble;
use crate::params::SpectrumParams;

pub const MAGIC: [u8; 8] = *b"SYNTRB01";
pub const VERSION: u16 = 1;
pub const KIND_FIELD: u16 = 1;
pub const KIND_TRAJECTORIES: u16 = 2;

fn bad(msg: impl Into<String>) -> Error {
    Error::SnapshotFormat(msg.into())
}

fn write_u16(w: &mut impl Write, v: u16) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64_slice(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    for v in vs {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn write_preamble(w: &mut impl Write, kind: u16) -> Result<()> {
    w.write_all(&MAGIC)?;
    write_u16(w, kind)?;
    write_u16(w, VERSION)
}

fn read_preamble(r: &mut impl Read) -> Result<u16> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(bad("bad magic; not a snapshot file"));
    }
    let kind = read_u16(r)?;
    let ver = read_u16(r)?;
    if ver != VERSION {
        return Err(bad(format!("unsupported snapshot version {ver}")));
    }
    Ok(kind)
}

/// A decoded field-state snapshot.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub params: SpectrumParams,
    pub layout: ModeLayout,
    pub band: (f64, f64),
    pub seed: u64,
    pub time: f64,
    pub amp_cos: Vec<f64>,
    pub amp_sin: Vec<f64>,
}

impl FieldSnapshot {
    pub fn capture(field: &SpectralField, params: &SpectrumParams, seed: u64) -> Self {
        FieldSnapshot {
            params: params.clone(),
            layout: field.modes.layout,
            band: field.modes.band,
            seed,
            time: field.time,
            amp_cos: field.amp_cos().to_vec(),
            amp_sin: field.amp_sin().to_vec(),
        }
    }

    /// Rebuild the mode set and realization this snapshot describes.
    pub fn rebuild(&self) -> Result<SpectralField> {
        let modes = std::sync::Arc::new(ModeSet::build(&self.params, self.layout, Some(self.band))?);
        SpectralField::restore(
            modes,
            self.amp_cos.clone(),
            self.amp_sin.clone(),
            self.time,
            self.seed,
        )
    }
}

pub fn write_field_snapshot(w: &mut impl Write, snap: &FieldSnapshot) -> Result<()> {
    write_preamble(w, KIND_FIELD)?;
    let p = &snap.params;
    write_u64(w, p.dim as u64)?;
    write_f64_slice(w, &[p.alpha, p.beta, p.e0, p.a, p.ell0, p.ell1])?;
    write_f64(w, snap.band.0)?;
    write_f64(w, snap.band.1)?;
    write_u64(w, snap.layout.n_shells as u64)?;
    write_u64(w, snap.layout.n_dirs as u64)?;
    write_u64(w, snap.seed)?;
    write_f64(w, snap.time)?;
    write_u64(w, snap.amp_cos.len() as u64)?;
    write_f64_slice(w, &snap.amp_cos)?;
    write_f64_slice(w, &snap.amp_sin)
}

pub fn read_field_snapshot(r: &mut impl Read) -> Result<FieldSnapshot> {
    if read_preamble(r)? != KIND_FIELD {
        return Err(bad("snapshot holds trajectories, not a field state"));
    }
    let dim = read_u64(r)? as usize;
    if dim != 2 && dim != 3 {
        return Err(bad(format!("unsupported dimension {dim}")));
    }
    let alpha = read_f64(r)?;
    let beta = read_f64(r)?;
    let e0 = read_f64(r)?;
    let a = read_f64(r)?;
    let ell0 = read_f64(r)?;
    let ell1 = read_f64(r)?;
    let params = SpectrumParams::from_amplitudes(alpha, beta, e0, a, ell0, ell1, dim)?;
    let band = (read_f64(r)?, read_f64(r)?);
    let layout = ModeLayout {
        n_shells: read_u64(r)? as usize,
        n_dirs: read_u64(r)? as usize,
    };
    let seed = read_u64(r)?;
    let time = read_f64(r)?;
    let n = read_u64(r)? as usize;
    if n != layout.n_modes() * dim {
        return Err(bad(format!(
            "amplitude count {n} does not match layout {} x {dim}",
            layout.n_modes()
        )));
    }
    if n > (1 << 28) {
        return Err(bad(format!("amplitude count {n} over the sanity limit")));
    }
    let amp_cos = read_f64_vec(r, n)?;
    let amp_sin = read_f64_vec(r, n)?;
    Ok(FieldSnapshot { params, layout, band, seed, time, amp_cos, amp_sin })
}

pub fn write_trajectories(w: &mut impl Write, e: &PairEnsemble) -> Result<()> {
    write_preamble(w, KIND_TRAJECTORIES)?;
    let model = e.model.as_bytes();
    if model.len() > 255 {
        return Err(Error::InvalidInput("model tag longer than 255 bytes".into()));
    }
    w.write_all(&[model.len() as u8])?;
    w.write_all(model)?;
    write_u64(w, e.dim as u64)?;
    write_u64(w, e.n_pairs() as u64)?;
    write_u64(w, e.times.len() as u64)?;
    write_u64(w, e.seed)?;
    write_f64_slice(w, &e.x0)?;
    write_f64_slice(w, &e.times)?;
    write_f64_slice(w, &e.trajectories)
}

pub fn read_trajectories(r: &mut impl Read) -> Result<PairEnsemble> {
    if read_preamble(r)? != KIND_TRAJECTORIES {
        return Err(bad("snapshot holds a field state, not trajectories"));
    }
    let mut len = [0u8; 1];
    r.read_exact(&mut len)?;
    let mut model = vec![0u8; len[0] as usize];
    r.read_exact(&mut model)?;
    let model = String::from_utf8(model).map_err(|_| bad("model tag is not UTF-8"))?;
    let dim = read_u64(r)? as usize;
    if dim != 2 && dim != 3 {
        return Err(bad(format!("unsupported dimension {dim}")));
    }
    let n_pairs = read_u64(r)? as usize;
    let n_times = read_u64(r)? as usize;
    let total = n_pairs
        .checked_mul(n_times)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| bad("trajectory extent overflows"))?;
    if total > (1 << 31) {
        return Err(bad(format!("trajectory extent {total} over the sanity limit")));
    }
    let seed = read_u64(r)?;
    let x0 = read_f64_vec(r, dim)?;
    let times = read_f64_vec(r, n_times)?;
    let trajectories = read_f64_vec(r, total)?;
    Ok(PairEnsemble { dim, x0, times, trajectories, drifts: None, seed, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;
    use std::io::Cursor;
    use std::sync::Arc;

    fn params() -> SpectrumParams {
        make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap()
    }

    #[test]
    fn field_snapshot_round_trips_exactly() {
        let p = params();
        let layout = ModeLayout { n_shells: 6, n_dirs: 8 };
        let modes = Arc::new(ModeSet::build(&p, layout, None).unwrap());
        let mut field = SpectralField::from_modes(Arc::clone(&modes), 99);
        field.advance(0.05);
        field.advance(0.05);
        let snap = FieldSnapshot::capture(&field, &p, 99);
        let mut buf = Vec::new();
        write_field_snapshot(&mut buf, &snap).unwrap();
        let back = read_field_snapshot(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(back.amp_cos, snap.amp_cos);
        assert_eq!(back.amp_sin, snap.amp_sin);
        assert_eq!(back.time, snap.time);
        assert_eq!(back.layout, layout);
        let rebuilt = back.rebuild().unwrap();
        let x = [0.3, -0.2];
        assert_eq!(rebuilt.eval_increment(&x), field.eval_increment(&x));
    }

    #[test]
    fn trajectory_block_round_trips_exactly() {
        let p = params();
        let opts = crate::pairs::SimOptions::default_for(2);
        let e = crate::pairs::simulate_pairs(&p, &[0.4, 0.1], 0.02, 0.2, 0.005, 5, 7, &opts)
            .unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &e).unwrap();
        let back = read_trajectories(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(back.trajectories, e.trajectories);
        assert_eq!(back.times, e.times);
        assert_eq!(back.x0, e.x0);
        assert_eq!(back.model, e.model);
        assert_eq!(back.seed, e.seed);
    }

    #[test]
    fn corrupted_headers_are_rejected() {
        let p = params();
        let layout = ModeLayout { n_shells: 4, n_dirs: 8 };
        let modes = Arc::new(ModeSet::build(&p, layout, None).unwrap());
        let field = SpectralField::from_modes(modes, 1);
        let snap = FieldSnapshot::capture(&field, &p, 1);
        let mut buf = Vec::new();
        write_field_snapshot(&mut buf, &snap).unwrap();

        let mut wrong_magic = buf.clone();
        wrong_magic[0] ^= 0xff;
        assert!(matches!(
            read_field_snapshot(&mut Cursor::new(&wrong_magic)),
            Err(Error::SnapshotFormat(_))
        ));

        let mut wrong_version = buf.clone();
        wrong_version[10] = 0xfe;
        assert!(read_field_snapshot(&mut Cursor::new(&wrong_version)).is_err());

        // a trajectory reader pointed at a field snapshot must refuse
        assert!(read_trajectories(&mut Cursor::new(&buf)).is_err());

        // truncation surfaces as an error, not garbage
        let cut = &buf[..buf.len() / 2];
        assert!(read_field_snapshot(&mut Cursor::new(cut)).is_err());
    }
}
