//! Voxel occupancy grid and ray-based visibility tests.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use super::Scene;
use crate::error::CoreError;
use crate::geom::{project, CameraModel, Pose};
use crate::Result;

const GRID_MAGIC: &[u8; 8] = b"VOXGRID1";

/// Boolean occupancy over a regular voxel lattice. A voxel is occupied iff
/// its center lies inside an occluder box or within one voxel of the room
/// boundary (the wall/floor/ceiling shell).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [u32; 3],
    /// Set when the voxel size is coarser than the smallest occluder
    /// dimension, i.e. thin geometry may be missing from the grid.
    pub degraded: bool,
    bits: Vec<u8>,
}

impl OccupancyGrid {
    fn bit_index(&self, ix: i64, iy: i64, iz: i64) -> usize {
        (ix + self.dims[0] as i64 * (iy + self.dims[1] as i64 * iz)) as usize
    }

    fn in_grid(&self, ix: i64, iy: i64, iz: i64) -> bool {
        ix >= 0
            && iy >= 0
            && iz >= 0
            && ix < self.dims[0] as i64
            && iy < self.dims[1] as i64
            && iz < self.dims[2] as i64
    }

    pub fn is_occupied(&self, idx: [i64; 3]) -> bool {
        if !self.in_grid(idx[0], idx[1], idx[2]) {
            return false;
        }
        let b = self.bit_index(idx[0], idx[1], idx[2]);
        self.bits[b / 8] & (1 << (b % 8)) != 0
    }

    fn set_occupied(&mut self, ix: i64, iy: i64, iz: i64) {
        let b = self.bit_index(ix, iy, iz);
        self.bits[b / 8] |= 1 << (b % 8);
    }

    /// Voxel containing a point, or `None` outside the grid volume.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[i64; 3]> {
        let mut idx = [0i64; 3];
        for k in 0..3 {
            let f = (p[k] - self.origin[k]) / self.voxel_size;
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
            idx[k] = f as i64;
        }
        Some(idx)
    }

    pub fn voxel_center(&self, idx: [i64; 3]) -> Vector3<f64> {
        Vector3::new(
            self.origin.x + (idx[0] as f64 + 0.5) * self.voxel_size,
            self.origin.y + (idx[1] as f64 + 0.5) * self.voxel_size,
            self.origin.z + (idx[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Binary serialization: magic, schema u32, origin 3xf64, voxel f64,
    /// dims 3xu32, degraded u8, bit count u64, bit-packed occupancy
    /// (LSB-first within each byte). All integers little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_u32::<LittleEndian>(1)?;
        for k in 0..3 {
            w.write_f64::<LittleEndian>(self.origin[k])?;
        }
        w.write_f64::<LittleEndian>(self.voxel_size)?;
        for d in self.dims {
            w.write_u32::<LittleEndian>(d)?;
        }
        w.write_u8(self.degraded as u8)?;
        w.write_u64::<LittleEndian>(self.bits.len() as u64)?;
        w.write_all(&self.bits)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<OccupancyGrid> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(CoreError::Serialization("bad occupancy grid magic".into()));
        }
        let schema = r.read_u32::<LittleEndian>()?;
        if schema != 1 {
            return Err(CoreError::Serialization(format!("unsupported grid schema {schema}")));
        }
        let mut origin = Vector3::zeros();
        for k in 0..3 {
            origin[k] = r.read_f64::<LittleEndian>()?;
        }
        let voxel_size = r.read_f64::<LittleEndian>()?;
        let mut dims = [0u32; 3];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LittleEndian>()?;
        }
        let degraded = r.read_u8()? != 0;
        let len = r.read_u64::<LittleEndian>()? as usize;
        let expect = (dims.iter().map(|&d| d as usize).product::<usize>() + 7) / 8;
        if len != expect {
            return Err(CoreError::Serialization(format!(
                "grid bitmap length {len} does not match dims {dims:?}"
            )));
        }
        let mut bits = vec![0u8; len];
        r.read_exact(&mut bits)?;
        Ok(OccupancyGrid { origin, voxel_size, dims, degraded, bits })
    }
}

/// Rasterize a scene into an occupancy grid.
pub fn build_occupancy(scene: &Scene, voxel_size: f64) -> Result<OccupancyGrid> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(CoreError::InvalidConfig(format!("voxel_size {voxel_size} must be positive")));
    }
    let extent = scene.bounds.extent();
    let mut dims = [0u32; 3];
    for k in 0..3 {
        dims[k] = (extent[k] / voxel_size - 1e-9).ceil().max(1.0) as u32;
    }
    let min_occ_dim = scene
        .occluders
        .iter()
        .flat_map(|o| (0..3).map(move |k| o.aabb.extent()[k]))
        .fold(f64::INFINITY, f64::min);
    let degraded = voxel_size > min_occ_dim;
    if degraded {
        log::warn!(
            "voxel size {voxel_size} exceeds the smallest occluder dimension {min_occ_dim}; \
             thin geometry will be lost"
        );
    }
    let n_bits: usize = dims.iter().map(|&d| d as usize).product();
    let mut grid = OccupancyGrid {
        origin: scene.bounds.min,
        voxel_size,
        dims,
        degraded,
        bits: vec![0u8; (n_bits + 7) / 8],
    };

    // Boundary shell: centers within one voxel of the room boundary.
    let shell_hi: Vec<i64> = (0..3)
        .map(|k| {
            let max = scene.bounds.max[k];
            // First index whose center exceeds max - voxel.
            (((max - voxel_size - grid.origin[k]) / voxel_size - 0.5).floor() as i64 + 1)
                .clamp(0, dims[k] as i64)
        })
        .collect();
    for iz in 0..dims[2] as i64 {
        for iy in 0..dims[1] as i64 {
            for ix in 0..dims[0] as i64 {
                if ix == 0
                    || iy == 0
                    || iz == 0
                    || ix >= shell_hi[0]
                    || iy >= shell_hi[1]
                    || iz >= shell_hi[2]
                {
                    grid.set_occupied(ix, iy, iz);
                }
            }
        }
    }

    // Occluder boxes: fill the index range whose centers fall inside
    // (half-open on the max side, matching Aabb::contains).
    for occ in &scene.occluders {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        let mut empty = false;
        for k in 0..3 {
            let a = (occ.aabb.min[k] - grid.origin[k]) / voxel_size - 0.5;
            let b = (occ.aabb.max[k] - grid.origin[k]) / voxel_size - 0.5;
            // Centers at i + 0.5 satisfy a <= i < b in scaled units.
            lo[k] = a.ceil().max(0.0) as i64;
            hi[k] = (b.ceil() as i64).min(dims[k] as i64);
            if lo[k] >= hi[k] {
                empty = true;
            }
        }
        if empty {
            continue;
        }
        for iz in lo[2]..hi[2] {
            for iy in lo[1]..hi[1] {
                for ix in lo[0]..hi[0] {
                    grid.set_occupied(ix, iy, iz);
                }
            }
        }
    }
    Ok(grid)
}

/// March the segment `from -> to` through the grid (Amanatides-Woo) and
/// report whether it passes through any occupied voxel. The voxels
/// containing the two endpoints are always exempt, so a landmark sitting
/// on a surface does not occlude itself. Errors when either endpoint lies
/// outside the grid volume.
pub fn ray_occluded(
    grid: &OccupancyGrid,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
) -> Result<bool> {
    let start = grid
        .voxel_of(from)
        .ok_or(CoreError::OutOfBounds([from.x, from.y, from.z]))?;
    let end = grid
        .voxel_of(to)
        .ok_or(CoreError::OutOfBounds([to.x, to.y, to.z]))?;
    if start == end {
        return Ok(false);
    }
    let d = to - from;
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for k in 0..3 {
        if d[k] > 0.0 {
            step[k] = 1;
            let boundary = grid.origin[k] + (start[k] + 1) as f64 * grid.voxel_size;
            t_max[k] = (boundary - from[k]) / d[k];
            t_delta[k] = grid.voxel_size / d[k];
        } else if d[k] < 0.0 {
            step[k] = -1;
            let boundary = grid.origin[k] + start[k] as f64 * grid.voxel_size;
            t_max[k] = (boundary - from[k]) / d[k];
            t_delta[k] = -grid.voxel_size / d[k];
        }
    }
    let mut cur = start;
    // Each iteration advances exactly one voxel; cap defensively.
    let max_steps = 4 * (grid.dims.iter().map(|&d| d as usize).sum::<usize>() + 2);
    for _ in 0..max_steps {
        if cur == end {
            return Ok(false);
        }
        let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
        if t_max[axis] > 1.0 {
            // Segment ends inside the current voxel (can only happen via
            // floating-point slack at the boundary of the end voxel).
            return Ok(false);
        }
        t_max[axis] += t_delta[axis];
        cur[axis] += step[axis];
        if !grid.in_grid(cur[0], cur[1], cur[2]) {
            return Ok(false);
        }
        if cur != end && cur != start && grid.is_occupied(cur) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// True when a position keeps `clearance` meters of free space around it:
/// no occupied voxel center lies within the clearance ball.
pub fn position_clear(grid: &OccupancyGrid, p: &Vector3<f64>, clearance: f64) -> bool {
    if grid.voxel_of(p).is_none() {
        return false;
    }
    let lo: Vec<i64> = (0..3)
        .map(|k| (((p[k] - clearance - grid.origin[k]) / grid.voxel_size).floor() as i64).max(0))
        .collect();
    let hi: Vec<i64> = (0..3)
        .map(|k| {
            (((p[k] + clearance - grid.origin[k]) / grid.voxel_size).ceil() as i64)
                .min(grid.dims[k] as i64)
        })
        .collect();
    for iz in lo[2]..hi[2] {
        for iy in lo[1]..hi[1] {
            for ix in lo[0]..hi[0] {
                let idx = [ix, iy, iz];
                if grid.is_occupied(idx)
                    && (grid.voxel_center(idx) - p).norm() <= clearance
                {
                    return false;
                }
            }
        }
    }
    true
}

/// A landmark is visible from a camera pose when it projects into the
/// image with depth in range and the sight line is not blocked. Points
/// outside the grid volume are simply not visible (no error).
pub fn visible(
    grid: &OccupancyGrid,
    pose: &Pose,
    cam: &CameraModel,
    point: &Vector3<f64>,
) -> bool {
    if project(point, pose, cam).is_none() {
        return false;
    }
    match ray_occluded(grid, &pose.position, point) {
        Ok(blocked) => !blocked,
        Err(_) => false,
    }
}
