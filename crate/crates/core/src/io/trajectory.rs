//! `LGTR` trajectory files.
//!
//! ```text
//! magic      4 bytes  "LGTR"
//! version    u16      format version (currently 1)
//! particles  u32      N
//! frames     u32      F
//! frame_dt   f64      physical time between frames
//! box        3 x f64  periodic box lengths
//! scenario   u8       0 = Taylor-Green vortex, 1 = reverse Poiseuille flow
//! flags      u8       bit 0: velocities present
//! payload    F frames, each N x 3 f32 positions [+ N x 3 f32 velocities]
//! meta_len   u32      byte length of the JSON block
//! metadata   UTF-8 JSON (seed, solver constants, generator version)
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::binary::{read_f32s, read_f64, read_u16, read_u32, read_u8, write_f32s};
use crate::error::{Error, Result};
use crate::neighbors::DomainSpec;
use crate::sph::{Scenario, Trajectory};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"LGTR";
pub const TRAJECTORY_VERSION: u16 = 1;
const FLAG_VELOCITIES: u8 = 1;

/// In-memory image of a trajectory file (single-precision payload).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub scenario: Scenario,
    pub num_particles: usize,
    pub num_frames: usize,
    pub frame_dt: f64,
    pub box_lengths: [f64; 3],
    /// `frames x N x 3`, frame-major.
    pub positions: Vec<f32>,
    pub velocities: Option<Vec<f32>>,
    pub metadata: Value,
}

fn flatten(frames: &[Vec<[f64; 3]>]) -> Vec<f32> {
    frames.iter().flatten().flatten().map(|&x| x as f32).collect()
}

fn unflatten(data: &[f32], frames: usize, n: usize) -> Vec<Vec<[f64; 3]>> {
    (0..frames)
        .map(|f| (0..n).map(|i| [0, 1, 2].map(|d| f64::from(data[(f * n + i) * 3 + d]))).collect())
        .collect()
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let n = traj.num_particles();
        if traj.positions.iter().any(|f| f.len() != n) {
            return Err(Error::Shape("frames differ in particle count".into()));
        }
        Ok(Self {
            scenario: traj.scenario,
            num_particles: n,
            num_frames: traj.num_frames(),
            frame_dt: traj.frame_dt,
            box_lengths: traj.domain.lengths,
            positions: flatten(&traj.positions),
            velocities: traj.velocities.as_deref().map(flatten),
            metadata: traj.metadata.clone(),
        })
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        Ok(Trajectory {
            scenario: self.scenario,
            domain: DomainSpec::new(self.box_lengths)?,
            frame_dt: self.frame_dt,
            positions: unflatten(&self.positions, self.num_frames, self.num_particles),
            velocities: self.velocities.as_ref().map(|v| unflatten(v, self.num_frames, self.num_particles)),
            metadata: self.metadata.clone(),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let expected = self.num_frames * self.num_particles * 3;
        if self.positions.len() != expected || self.velocities.as_ref().is_some_and(|v| v.len() != expected) {
            return Err(Error::Shape(format!("payload does not hold {} frames of {} particles", self.num_frames, self.num_particles)));
        }
        let n = u32::try_from(self.num_particles).map_err(|_| Error::SizeLimit("particle count exceeds u32".into()))?;
        let f = u32::try_from(self.num_frames).map_err(|_| Error::SizeLimit("frame count exceeds u32".into()))?;
        w.write_all(TRAJECTORY_MAGIC)?;
        w.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&f.to_le_bytes())?;
        w.write_all(&self.frame_dt.to_le_bytes())?;
        for l in self.box_lengths {
            w.write_all(&l.to_le_bytes())?;
        }
        w.write_all(&[self.scenario.tag()])?;
        w.write_all(&[if self.velocities.is_some() { FLAG_VELOCITIES } else { 0 }])?;
        let frame = self.num_particles * 3;
        for k in 0..self.num_frames {
            write_f32s(w, &self.positions[k * frame..(k + 1) * frame])?;
            if let Some(v) = &self.velocities {
                write_f32s(w, &v[k * frame..(k + 1) * frame])?;
            }
        }
        let meta = serde_json::to_vec(&self.metadata)?;
        let len = u32::try_from(meta.len()).map_err(|_| Error::SizeLimit("metadata exceeds u32 bytes".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&meta)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated trajectory header".into()))?;
        if &magic != TRAJECTORY_MAGIC {
            return Err(Error::Format("not a trajectory file (bad magic)".into()));
        }
        let version = read_u16(r)?;
        if version != TRAJECTORY_VERSION {
            return Err(Error::Version { found: version, supported: TRAJECTORY_VERSION });
        }
        let num_particles = read_u32(r)? as usize;
        let num_frames = read_u32(r)? as usize;
        let frame_dt = read_f64(r)?;
        let box_lengths = [read_f64(r)?, read_f64(r)?, read_f64(r)?];
        let scenario = Scenario::from_tag(read_u8(r)?)?;
        let flags = read_u8(r)?;
        if flags & !FLAG_VELOCITIES != 0 {
            return Err(Error::Format(format!("unknown trajectory flags {flags:#04x}")));
        }
        let has_vel = flags & FLAG_VELOCITIES != 0;
        let frame = num_particles * 3;
        let mut positions = Vec::with_capacity(num_frames * frame);
        let mut velocities = has_vel.then(|| Vec::with_capacity(num_frames * frame));
        for _ in 0..num_frames {
            positions.extend(read_f32s(r, frame)?);
            if let Some(v) = velocities.as_mut() {
                v.extend(read_f32s(r, frame)?);
            }
        }
        let len = read_u32(r)? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta).map_err(|_| Error::Format("truncated metadata block".into()))?;
        let metadata = serde_json::from_slice(&meta)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after metadata".into()));
        }
        Ok(Self { scenario, num_particles, num_frames, frame_dt, box_lengths, positions, velocities, metadata })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    TrajectoryFile::from_trajectory(traj)?.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = BufReader::new(File::open(path)?);
    TrajectoryFile::read_from(&mut r)?.to_trajectory()
}
