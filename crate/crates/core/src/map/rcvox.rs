//! Robocentric two-layer voxel array.
//!
//! The top-level array (TLA) is a dense `N³` ring buffer of grid slots, with
//! `N = 2λl/g`. A global grid cell lands in slot `cell mod N`, so moving the
//! robot only resets the slab of slots whose cells left the window. Each
//! occupied slot owns a dense bottom-level array (BLA) of `(g/v)³` voxels.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{KBest, MapPoint, Neighbor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum NeighborMode {
    Six,
    Eighteen,
    TwentySix,
}

impl TryFrom<u32> for NeighborMode {
    type Error = String;
    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            _ => Err(format!("neighbor_mode must be 6, 18 or 26, got {v}")),
        }
    }
}

impl From<NeighborMode> for u32 {
    fn from(m: NeighborMode) -> u32 {
        match m {
            NeighborMode::Six => 6,
            NeighborMode::Eighteen => 18,
            NeighborMode::TwentySix => 26,
        }
    }
}

impl NeighborMode {
    /// Offsets of the adjacent voxels, excluding the voxel itself.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Self::Six => l1 == 1,
                        Self::Eighteen => l1 == 1 || l1 == 2,
                        Self::TwentySix => l1 > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcVoxConfig {
    /// Lidar range `l`; the local map cube has edge `2l`.
    pub lidar_range: f64,
    pub lambda: f64,
    pub grid_size: f64,
    pub voxel_size: f64,
    pub neighbor_mode: NeighborMode,
    pub max_points_per_voxel: usize,
    /// A point closer than this to a stored point of its voxel is dropped; 0 keeps all.
    pub min_point_spacing: f64,
}

impl Default for RcVoxConfig {
    fn default() -> Self {
        Self {
            lidar_range: 20.0,
            lambda: 1.25,
            grid_size: 5.0,
            voxel_size: 0.5,
            neighbor_mode: NeighborMode::Eighteen,
            max_points_per_voxel: 20,
            min_point_spacing: 0.1,
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * r.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

impl RcVoxConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lidar_range, self.grid_size, self.voxel_size]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidConfig(
                "map lidar_range, grid_size and voxel_size must be positive".into(),
            ));
        }
        if !(self.lambda >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "map lambda must be at least 1, got {}",
                self.lambda
            )));
        }
        if self.voxel_size > self.grid_size {
            return Err(Error::InvalidConfig(
                "map voxel_size exceeds grid_size".into(),
            ));
        }
        if integer_ratio(2.0 * self.lambda * self.lidar_range, self.grid_size).is_none() {
            return Err(Error::InvalidConfig(
                "map 2*lambda*lidar_range must be a positive multiple of grid_size".into(),
            ));
        }
        if integer_ratio(self.grid_size, self.voxel_size).is_none() {
            return Err(Error::InvalidConfig(
                "map grid_size must be a positive multiple of voxel_size".into(),
            ));
        }
        if !(self.min_point_spacing >= 0.0 && self.min_point_spacing < self.voxel_size) {
            return Err(Error::InvalidConfig(
                "map min_point_spacing must lie in [0, voxel_size)".into(),
            ));
        }
        if self.max_points_per_voxel == 0 {
            return Err(Error::InvalidConfig(
                "map max_points_per_voxel must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid slots per TLA axis.
    pub fn tla_dim(&self) -> usize {
        integer_ratio(2.0 * self.lambda * self.lidar_range, self.grid_size).unwrap_or(1)
    }

    /// Voxels per BLA axis.
    pub fn bla_dim(&self) -> usize {
        integer_ratio(self.grid_size, self.voxel_size).unwrap_or(1)
    }
}

/// Global integer voxel coordinate, relative to `t_init`.
pub type VoxelKey = [i64; 3];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub inserted: usize,
    pub skipped_outside: usize,
    pub dropped_full: usize,
    pub dropped_close: usize,
}

#[derive(Clone, Copy, Debug)]
struct NeighborRecord {
    point: MapPoint,
    slot: u32,
    epoch: u32,
}

#[derive(Clone, Debug, Default)]
struct Voxel {
    own: Vec<MapPoint>,
    neighbors: Vec<NeighborRecord>,
}

#[derive(Debug)]
struct Grid {
    cell: [i64; 3],
    b_ori: Vector3<f64>,
    voxels: Vec<Voxel>,
}

/// Contents of one voxel, for inspection and audits.
#[derive(Clone, Debug)]
pub struct VoxelSnapshot {
    pub key: VoxelKey,
    pub own: Vec<MapPoint>,
    /// Neighbor records whose source grid is still live.
    pub neighbors: Vec<MapPoint>,
}

#[derive(Debug)]
pub struct RcVoxMap {
    cfg: RcVoxConfig,
    n_grid: i64,
    n_vox: i64,
    offsets: Vec<[i64; 3]>,
    t_init: Vector3<f64>,
    m_curr: Vector3<f64>,
    it_m_curr: [i64; 3],
    window_lo: [i64; 3],
    robot: Vector3<f64>,
    slots: Vec<Option<Box<Grid>>>,
    epochs: Vec<u32>,
    point_count: usize,
    next_id: u64,
}

fn floor_div(x: f64, s: f64) -> i64 {
    (x / s).floor() as i64
}

impl RcVoxMap {
    /// Places the robot at the centre of the TLA.
    pub fn initialize(cfg: RcVoxConfig, r_init: Vector3<f64>) -> Result<Self> {
        cfg.validate()?;
        if !r_init.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("map initial position"));
        }
        let n_grid = cfg.tla_dim() as i64;
        let n_vox = cfg.bla_dim() as i64;
        let t_init = r_init - Vector3::repeat(cfg.lambda * cfg.lidar_range);
        let n_slots = (n_grid * n_grid * n_grid) as usize;
        Ok(Self {
            offsets: cfg.neighbor_mode.offsets(),
            cfg,
            n_grid,
            n_vox,
            t_init,
            m_curr: t_init,
            it_m_curr: [0; 3],
            window_lo: [0; 3],
            robot: r_init,
            slots: (0..n_slots).map(|_| None).collect(),
            epochs: vec![0; n_slots],
            point_count: 0,
            next_id: 0,
        })
    }

    pub fn config(&self) -> &RcVoxConfig {
        &self.cfg
    }

    pub fn t_init(&self) -> Vector3<f64> {
        self.t_init
    }

    pub fn m_curr(&self) -> Vector3<f64> {
        self.m_curr
    }

    pub fn it_m_curr(&self) -> [i64; 3] {
        self.it_m_curr
    }

    pub fn robot(&self) -> Vector3<f64> {
        self.robot
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    pub fn occupied_grids(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// World-space bounds `[min, max)` of the current TLA window.
    pub fn window_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let g = self.cfg.grid_size;
        let lo = Vector3::from(self.window_lo.map(|c| c as f64)) * g + self.t_init;
        (lo, lo + Vector3::repeat(self.n_grid as f64 * g))
    }

    /// Global grid cell containing `p`.
    pub fn grid_cell(&self, p: &Vector3<f64>) -> [i64; 3] {
        let g = self.cfg.grid_size;
        [0, 1, 2].map(|i| floor_div(p[i] - self.t_init[i], g))
    }

    /// Global voxel coordinate of `p`.
    pub fn voxel_key(&self, p: &Vector3<f64>) -> VoxelKey {
        let cell = self.grid_cell(p);
        let ib = self.bla_index(p);
        [0, 1, 2].map(|i| cell[i] * self.n_vox + ib[i])
    }

    /// Grid origin recorded for the cell containing `p`.
    pub fn grid_origin(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let cell = self.grid_cell(p);
        Vector3::from(cell.map(|c| c as f64)) * self.cfg.grid_size + self.t_init
    }

    /// Voxel index of `p` inside the BLA of its grid.
    pub fn bla_index(&self, p: &Vector3<f64>) -> [i64; 3] {
        let b_ori = self.grid_origin(p);
        bla_index(p, &b_ori, self.cfg.voxel_size, self.n_vox)
    }

    fn cell_in_window(&self, cell: &[i64; 3]) -> bool {
        (0..3).all(|i| cell[i] >= self.window_lo[i] && cell[i] < self.window_lo[i] + self.n_grid)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.iter().all(|v| v.is_finite()) && self.cell_in_window(&self.grid_cell(p))
    }

    /// TLA slot index of `p` by modulo remapping around the current origin.
    pub fn tla_index(&self, p: &Vector3<f64>) -> Result<[i64; 3]> {
        if !self.contains(p) {
            return Err(Error::OutsideLocalMap {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        let g = self.cfg.grid_size;
        Ok([0, 1, 2].map(|i| {
            (floor_div(p[i] - self.m_curr[i], g) + self.it_m_curr[i]).rem_euclid(self.n_grid)
        }))
    }

    fn slot_of(&self, cell: &[i64; 3]) -> usize {
        let n = self.n_grid;
        let [x, y, z] = cell.map(|c| c.rem_euclid(n));
        (x + n * (y + n * z)) as usize
    }

    fn voxel_of(&self, ib: &[i64; 3]) -> usize {
        let n = self.n_vox;
        (ib[0] + n * (ib[1] + n * ib[2])) as usize
    }

    fn reset_slot(&mut self, slot: usize) {
        if let Some(grid) = self.slots[slot].take() {
            self.point_count -= grid.voxels.iter().map(|v| v.own.len()).sum::<usize>();
            self.epochs[slot] = self.epochs[slot].wrapping_add(1);
        }
    }

    /// Re-centres the map on `r`, returning the number of grids reset.
    pub fn update_origin(&mut self, r: Vector3<f64>) -> usize {
        if !r.iter().all(|v| v.is_finite()) {
            log::warn!("ignoring non-finite map origin update");
            return 0;
        }
        self.robot = r;
        let g = self.cfg.grid_size;
        let c = self.grid_cell(&r);
        self.m_curr = Vector3::from(c.map(|v| v as f64)) * g + self.t_init;
        self.it_m_curr = c.map(|v| v.rem_euclid(self.n_grid));
        let lo = c.map(|v| v - self.n_grid / 2);
        if lo == self.window_lo {
            return 0;
        }
        let old_lo = std::mem::replace(&mut self.window_lo, lo);
        let mut evicted = 0;
        for slot in 0..self.slots.len() {
            let stale = match &self.slots[slot] {
                Some(grid) => !self.cell_in_window(&grid.cell),
                None => false,
            };
            if stale {
                self.reset_slot(slot);
                evicted += 1;
            }
        }
        self.backfill_entering(old_lo);
        evicted
    }

    /// Records surviving points into adjacent voxels of cells that just entered the window;
    /// those cells had no slot when the points were inserted.
    fn backfill_entering(&mut self, old_lo: [i64; 3]) {
        let n_grid = self.n_grid;
        let entering = |c: &[i64; 3], lo: &[i64; 3]| {
            let inside = |w: &[i64; 3]| (0..3).all(|i| c[i] >= w[i] && c[i] < w[i] + n_grid);
            inside(lo) && !inside(&old_lo)
        };
        let lo = self.window_lo;
        let mut pending = Vec::new();
        for (slot, grid) in self.slots.iter().enumerate() {
            let Some(grid) = grid else { continue };
            let borders = (-1..=1i64).any(|dx| {
                (-1..=1i64).any(|dy| {
                    (-1..=1i64).any(|dz| {
                        entering(
                            &[grid.cell[0] + dx, grid.cell[1] + dy, grid.cell[2] + dz],
                            &lo,
                        )
                    })
                })
            });
            if !borders {
                continue;
            }
            let n = self.n_vox;
            for (vi, voxel) in grid.voxels.iter().enumerate() {
                if voxel.own.is_empty() {
                    continue;
                }
                let vi = vi as i64;
                let ib = [vi % n, (vi / n) % n, vi / (n * n)];
                let key = [0, 1, 2].map(|i| grid.cell[i] * n + ib[i]);
                for d in &self.offsets {
                    let nk = [0, 1, 2].map(|i| key[i] + d[i]);
                    let ncell = nk.map(|c| c.div_euclid(n));
                    if !entering(&ncell, &lo) {
                        continue;
                    }
                    let nvi = self.voxel_of(&nk.map(|c| c.rem_euclid(n)));
                    for point in &voxel.own {
                        let record = NeighborRecord {
                            point: *point,
                            slot: slot as u32,
                            epoch: self.epochs[slot],
                        };
                        pending.push((ncell, nvi, record));
                    }
                }
            }
        }
        for (ncell, nvi, record) in pending {
            let (_, grid) = self.grid_mut(ncell);
            grid.voxels[nvi].neighbors.push(record);
        }
    }

    /// Returns the grid for `cell`, creating its BLA on first use.
    fn grid_mut(&mut self, cell: [i64; 3]) -> (usize, &mut Grid) {
        let slot = self.slot_of(&cell);
        if self.slots[slot].as_ref().is_some_and(|g| g.cell != cell) {
            self.reset_slot(slot);
        }
        let n_vox = (self.n_vox * self.n_vox * self.n_vox) as usize;
        let b_ori = Vector3::from(cell.map(|c| c as f64)) * self.cfg.grid_size + self.t_init;
        let grid = self.slots[slot].get_or_insert_with(|| {
            Box::new(Grid {
                cell,
                b_ori,
                voxels: vec![Voxel::default(); n_vox],
            })
        });
        (slot, grid)
    }

    /// Inserts points lying inside both the TLA window and the `2l` cube around the robot.
    pub fn insert(&mut self, points: &[Vector3<f64>]) -> InsertStats {
        let mut stats = InsertStats::default();
        let l = self.cfg.lidar_range;
        for p in points {
            if !self.contains(p) || (p - self.robot).amax() > l {
                stats.skipped_outside += 1;
                continue;
            }
            let key = self.voxel_key(p);
            let cell = self.grid_cell(p);
            let ib = [0, 1, 2].map(|i| key[i] - cell[i] * self.n_vox);
            let vi = self.voxel_of(&ib);
            let cap = self.cfg.max_points_per_voxel;
            let spacing2 = self.cfg.min_point_spacing.powi(2);
            let id = self.next_id;
            let (slot, grid) = self.grid_mut(cell);
            let voxel = &mut grid.voxels[vi];
            if voxel.own.len() >= cap {
                stats.dropped_full += 1;
                continue;
            }
            if spacing2 > 0.0
                && voxel
                    .own
                    .iter()
                    .any(|q| (q.p - p).norm_squared() < spacing2)
            {
                stats.dropped_close += 1;
                continue;
            }
            let point = MapPoint { id, p: *p };
            voxel.own.push(point);
            self.next_id += 1;
            self.point_count += 1;
            stats.inserted += 1;
            let record = NeighborRecord {
                point,
                slot: slot as u32,
                epoch: self.epochs[slot],
            };
            for k in 0..self.offsets.len() {
                let d = self.offsets[k];
                let nk = [0, 1, 2].map(|i| key[i] + d[i]);
                let ncell = nk.map(|c| c.div_euclid(self.n_vox));
                if !self.cell_in_window(&ncell) {
                    continue;
                }
                let nib = nk.map(|c| c.rem_euclid(self.n_vox));
                let nvi = self.voxel_of(&nib);
                let (_, ngrid) = self.grid_mut(ncell);
                ngrid.voxels[nvi].neighbors.push(record);
            }
        }
        stats
    }

    fn lookup(&self, p: &Vector3<f64>) -> Result<Option<&Voxel>> {
        if !self.contains(p) {
            return Err(Error::OutsideLocalMap {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        let cell = self.grid_cell(p);
        Ok(match &self.slots[self.slot_of(&cell)] {
            Some(grid) if grid.cell == cell => {
                let ib = bla_index(p, &grid.b_ori, self.cfg.voxel_size, self.n_vox);
                Some(&grid.voxels[self.voxel_of(&ib)])
            }
            _ => None,
        })
    }

    fn record_live(&self, r: &NeighborRecord) -> bool {
        self.epochs[r.slot as usize] == r.epoch
    }

    /// k nearest points among the query voxel's own and neighbor records.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Result<Vec<Neighbor>> {
        let mut best = KBest::new(k);
        if let Some(voxel) = self.lookup(query)? {
            for pt in &voxel.own {
                best.offer(query, pt);
            }
            for r in &voxel.neighbors {
                if self.record_live(r) {
                    best.offer(query, &r.point);
                }
            }
        }
        Ok(best.into_vec())
    }

    /// Every live point stored as an own record.
    pub fn points(&self) -> Vec<MapPoint> {
        let mut out: Vec<MapPoint> = self
            .slots
            .iter()
            .flatten()
            .flat_map(|g| g.voxels.iter().flat_map(|v| v.own.iter().copied()))
            .collect();
        out.sort_by_key(|p| p.id);
        out
    }

    /// Snapshot of every non-empty voxel.
    pub fn voxels(&self) -> Vec<VoxelSnapshot> {
        let n = self.n_vox;
        let mut out = Vec::new();
        for grid in self.slots.iter().flatten() {
            for (i, v) in grid.voxels.iter().enumerate() {
                let neighbors: Vec<MapPoint> = v
                    .neighbors
                    .iter()
                    .filter(|r| self.record_live(r))
                    .map(|r| r.point)
                    .collect();
                if v.own.is_empty() && neighbors.is_empty() {
                    continue;
                }
                let i = i as i64;
                let ib = [i % n, (i / n) % n, i / (n * n)];
                out.push(VoxelSnapshot {
                    key: [0, 1, 2].map(|a| grid.cell[a] * n + ib[a]),
                    own: v.own.clone(),
                    neighbors,
                });
            }
        }
        out.sort_by_key(|s| s.key);
        out
    }

    /// Approximate heap footprint in bytes.
    pub fn memory_bytes(&self) -> usize {
        use std::mem::size_of;
        let mut total = self.slots.capacity() * size_of::<Option<Box<Grid>>>()
            + self.epochs.capacity() * size_of::<u32>();
        for grid in self.slots.iter().flatten() {
            total += size_of::<Grid>() + grid.voxels.capacity() * size_of::<Voxel>();
            for v in &grid.voxels {
                total += v.own.capacity() * size_of::<MapPoint>()
                    + v.neighbors.capacity() * size_of::<NeighborRecord>();
            }
        }
        total
    }
}

/// Voxel index of `p` inside the grid whose origin is `b_ori`, clamped to `[0, n_vox)`.
pub fn bla_index(p: &Vector3<f64>, b_ori: &Vector3<f64>, voxel_size: f64, n_vox: i64) -> [i64; 3] {
    [0, 1, 2].map(|i| floor_div(p[i] - b_ori[i], voxel_size).clamp(0, n_vox - 1))
}
