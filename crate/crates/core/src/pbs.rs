//! Particle-based simulator.
//!
//! Each step releases a batch of particles on the droplet footprint at
//! `z = 0`, then gives every particle an independent Gaussian displacement
//! with standard deviation `sqrt(2 D dt)` per axis. A step that ends at or
//! beyond the agar surface is an encounter with the bacterial lawn: the
//! particle is consumed with the partially adsorbing probability of
//! [`growth::absorption_probability`], otherwise it is mirrored back into the
//! agar. The side wall and the plate bottom mirror particles unconditionally.
//!
//! Every particle draws from its own counter-based stream keyed by
//! `(seed, particle id, step)`, so the result of a run depends only on the
//! configuration, never on how many worker threads share the work.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::droplet::{sample_release_batch, SoakingModel};
use crate::error::{Error, Result};
use crate::growth::{self, ConsumptionSchedule};
use crate::model::{validate_config, PlateGeometry, SimulationConfig};
use crate::rng::{CounterRng, Domain};

const REFLECTION_BUDGET: usize = 32;
const CHUNK: usize = 8192;

/// A free particle inside the agar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub position: [f64; 3],
}

/// Where and when a particle was consumed on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumptionEvent {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
}

/// Outcome of moving one particle for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    Free,
    /// Consumed at surface point `(x, y)`, a fraction `frac` into the step.
    Consumed { x: f64, y: f64, frac: f64 },
}

/// Engine state between steps. `particles` holds only particles still in the
/// agar; consumed ones live on in `consumed_ledger`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time_s: f64,
    pub step_index: u64,
    pub particles: Vec<Particle>,
    pub released_count: u64,
    pub reservoir_mol: f64,
    pub consumed_ledger: Vec<ConsumptionEvent>,
    pub rng_seed: u64,
    /// Stochastic-rounding phase shared by all release batches of the run.
    pub release_phase: f64,
}

impl SimState {
    pub fn new(config: &SimulationConfig) -> Self {
        let phase = CounterRng::new(config.rng_seed, Domain::Phase, 0, 0).next_f64();
        Self {
            time_s: 0.0,
            step_index: 0,
            particles: Vec::new(),
            released_count: 0,
            reservoir_mol: config.soaking_model().total_content_mol(),
            consumed_ledger: Vec::new(),
            rng_seed: config.rng_seed,
            release_phase: phase,
        }
    }

    pub fn alive_count(&self) -> u64 {
        self.particles.len() as u64
    }

    pub fn consumed_count(&self) -> u64 {
        self.consumed_ledger.len() as u64
    }
}

/// Counts on a rectangular `(x, y)` grid over the plate's bounding square,
/// row-major with `y` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    pub nx: usize,
    pub ny: usize,
    pub half_width_m: f64,
    pub counts: Vec<u64>,
    /// True for bins lying wholly outside the plate disk.
    pub outside: Vec<bool>,
}

impl HistogramGrid {
    pub fn empty(nx: usize, ny: usize, half_width_m: f64) -> Self {
        let mut outside = Vec::with_capacity(nx * ny);
        let bx = 2.0 * half_width_m / nx as f64;
        let by = 2.0 * half_width_m / ny as f64;
        for iy in 0..ny {
            for ix in 0..nx {
                let (x0, y0) = (-half_width_m + ix as f64 * bx, -half_width_m + iy as f64 * by);
                let nearest_x = 0f64.clamp(x0, x0 + bx);
                let nearest_y = 0f64.clamp(y0, y0 + by);
                outside.push(nearest_x.hypot(nearest_y) > half_width_m);
            }
        }
        Self { nx, ny, half_width_m, counts: vec![0; nx * ny], outside }
    }

    #[inline]
    pub fn bin_of(&self, x: f64, y: f64) -> usize {
        let w = 2.0 * self.half_width_m;
        let ix = (((x + self.half_width_m) / w * self.nx as f64) as isize).clamp(0, self.nx as isize - 1);
        let iy = (((y + self.half_width_m) / w * self.ny as f64) as isize).clamp(0, self.ny as isize - 1);
        iy as usize * self.nx + ix as usize
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let b = self.bin_of(x, y);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin centre `(x, y)` for flat index `b`.
    pub fn center_of(&self, b: usize) -> (f64, f64) {
        let (ix, iy) = (b % self.nx, b / self.nx);
        let bx = 2.0 * self.half_width_m / self.nx as f64;
        let by = 2.0 * self.half_width_m / self.ny as f64;
        (
            -self.half_width_m + (ix as f64 + 0.5) * bx,
            -self.half_width_m + (iy as f64 + 0.5) * by,
        )
    }
}

/// Spatial record at one sample time: particles in the agar integrated over
/// depth, and cumulative consumption per surface bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time_s: f64,
    pub grid: HistogramGrid,
    pub consumed_grid: HistogramGrid,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub times_s: Vec<f64>,
    pub in_agar_counts: Vec<u64>,
    pub consumed_counts: Vec<u64>,
    pub released_counts: Vec<u64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    fn record(&mut self, state: &SimState) {
        self.times_s.push(state.time_s);
        self.in_agar_counts.push(state.alive_count());
        self.consumed_counts.push(state.consumed_count());
        self.released_counts.push(state.released_count);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub series: TimeSeries,
    pub ledger: Vec<ConsumptionEvent>,
    pub final_state: SimState,
}

/// Z-integrated particle histogram over the plate's bounding square.
pub fn bin_snapshot(particles: &[Particle], geometry: &PlateGeometry, bins: (usize, usize)) -> HistogramGrid {
    let mut grid = HistogramGrid::empty(bins.0.max(1), bins.1.max(1), geometry.plate_radius_m);
    for p in particles {
        grid.add(p.position[0], p.position[1]);
    }
    grid
}

/// Mirrors `p_new` back into the closed domain: off the surface
/// (`z -> -z`), the bottom (`z -> 2 z_a - z`) and the side wall
/// (`r -> 2 r_p - r` at fixed angle), repeating until inside.
///
/// The surface mirror must only be applied after the consumption trial for
/// the step has failed.
pub fn reflect_cylinder(p_old: [f64; 3], p_new: [f64; 3], geometry: &PlateGeometry) -> Result<[f64; 3]> {
    debug_assert!(geometry.contains(p_old) || p_old[2].abs() < 1e-12);
    let rp = geometry.plate_radius_m;
    let za = geometry.agar_depth_m;
    let mut p = p_new;
    for _ in 0..REFLECTION_BUDGET {
        if p[2] < 0.0 {
            p[2] = -p[2];
        }
        if p[2] > za {
            p[2] = 2.0 * za - p[2];
        }
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 > rp * rp {
            let r = r2.sqrt();
            let scale = (2.0 * rp - r) / r;
            p[0] *= scale;
            p[1] *= scale;
        }
        if p[2] >= 0.0 && p[2] <= za && p[0] * p[0] + p[1] * p[1] <= rp * rp {
            return Ok(p);
        }
    }
    Err(Error::ReflectionDiverged { iterations: REFLECTION_BUDGET, x: p[0], y: p[1], z: p[2] })
}

/// Brownian increment for one particle and step.
#[inline]
pub fn brownian_displacement(rng: &mut CounterRng, sigma: f64) -> [f64; 3] {
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dz: f64 = rng.sample(StandardNormal);
    [sigma * dx, sigma * dy, sigma * dz]
}

/// Moves `pos` by `disp`, running the surface trial with probability
/// `absorb` and reflecting off the walls. On consumption `pos` is left at
/// the start point.
pub fn apply_displacement(
    pos: &mut [f64; 3],
    disp: [f64; 3],
    geometry: &PlateGeometry,
    absorb: f64,
    rng: &mut CounterRng,
) -> Result<Fate> {
    let old = *pos;
    let mut new = [old[0] + disp[0], old[1] + disp[1], old[2] + disp[2]];
    let hits_surface = new[2] < 0.0 || (new[2] == 0.0 && disp[2] != 0.0);
    if hits_surface {
        if absorb > 0.0 && rng.next_f64() < absorb {
            // crossing point by linear interpolation to z = 0
            let frac = if old[2] - new[2] > 0.0 { old[2] / (old[2] - new[2]) } else { 0.0 };
            let mut x = old[0] + frac * disp[0];
            let mut y = old[1] + frac * disp[1];
            let rp = geometry.plate_radius_m;
            let r = x.hypot(y);
            if r > rp {
                let scale = (2.0 * rp - r) / r;
                x *= scale;
                y *= scale;
            }
            return Ok(Fate::Consumed { x, y, frac });
        }
        new[2] = -new[2];
    }
    *pos = reflect_cylinder(old, new, geometry)?;
    Ok(Fate::Free)
}

/// Runs the particle engine for one configuration.
pub struct Simulator {
    config: SimulationConfig,
    model: SoakingModel,
    schedule: ConsumptionSchedule,
    sigma: f64,
    pool: rayon::ThreadPool,
}

impl Simulator {
    /// `workers == 0` uses all available cores.
    /// Fails with [`Error::TimeStepTooCoarse`] if the absorption probability
    /// would exceed one at any step of the run.
    pub fn new(config: &SimulationConfig, workers: usize) -> Result<Self> {
        validate_config(config).into_result()?;
        if let Some((_, rate, probability)) = config.first_coarse_step() {
            return Err(Error::TimeStepTooCoarse {
                probability,
                rate,
                diffusion: config.species.diffusion_coeff_m2_s,
                dt: config.time_step_s,
            });
        }
        Self::new_unchecked(config, workers)
    }

    /// Builds a simulator without validating `config`. Intended for test
    /// harnesses that need degenerate parameters such as `D = 0`.
    pub fn new_unchecked(config: &SimulationConfig, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self {
            config: config.clone(),
            model: config.soaking_model(),
            schedule: config.consumption_schedule(),
            sigma: (2.0 * config.species.diffusion_coeff_m2_s * config.time_step_s).sqrt(),
            pool,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Absorption probability in force for a step starting at `t`.
    pub fn absorption_at(&self, t: f64) -> Result<f64> {
        let k = self.schedule.consumption_rate_at(t)?;
        if self.sigma == 0.0 {
            return Ok(0.0);
        }
        growth::absorption_probability(k, self.config.species.diffusion_coeff_m2_s, self.config.time_step_s)
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut SimState) -> Result<()> {
        let dt = self.config.time_step_s;
        let k = state.step_index;
        let t = state.time_s;
        let absorb = self.absorption_at(t)?;
        let w = self.config.species.particle_weight_mol;

        let mut release_rng = CounterRng::new(state.rng_seed, Domain::Release, 0, k);
        let batch = sample_release_batch(&self.model, t, dt, w, state.release_phase, &mut release_rng)?;
        let first_id = state.released_count;
        state.particles.extend(
            batch
                .positions
                .iter()
                .enumerate()
                .map(|(i, p)| Particle { id: first_id + i as u64, position: [p[0], p[1], 0.0] }),
        );
        state.released_count += batch.count;
        state.reservoir_mol = self.model.total_content_mol() - state.released_count as f64 * w;

        let seed = state.rng_seed;
        let sigma = self.sigma;
        let geometry = self.config.geometry;
        let per_chunk: Vec<Result<Vec<(usize, u64, Fate)>>> = self.pool.install(|| {
            state
                .particles
                .par_chunks_mut(CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut hits = Vec::new();
                    for (i, p) in chunk.iter_mut().enumerate() {
                        let mut rng = CounterRng::particle(seed, p.id, k);
                        let disp = brownian_displacement(&mut rng, sigma);
                        let fate = apply_displacement(&mut p.position, disp, &geometry, absorb, &mut rng)?;
                        if fate != Fate::Free {
                            hits.push((c * CHUNK + i, p.id, fate));
                        }
                    }
                    Ok(hits)
                })
                .collect()
        });

        let mut consumed = Vec::new();
        for hits in per_chunk {
            consumed.extend(hits?);
        }
        if !consumed.is_empty() {
            let mut events: Vec<(f64, u64, ConsumptionEvent)> = consumed
                .iter()
                .map(|&(_, id, fate)| match fate {
                    Fate::Consumed { x, y, frac } => {
                        let time_s = t + frac * dt;
                        (time_s, id, ConsumptionEvent { time_s, x_m: x, y_m: y })
                    }
                    Fate::Free => unreachable!(),
                })
                .collect();
            events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            state.consumed_ledger.extend(events.into_iter().map(|e| e.2));

            let mut gone = consumed.iter().map(|c| c.0).peekable();
            let mut idx = 0usize;
            state.particles.retain(|_| {
                let keep = gone.peek() != Some(&idx);
                if !keep {
                    gone.next();
                }
                idx += 1;
                keep
            });
        }

        state.step_index = k + 1;
        state.time_s = (k + 1) as f64 * dt;
        debug_assert_eq!(state.released_count, state.alive_count() + state.consumed_count());
        Ok(())
    }

    /// Runs from `t = 0` to the configured end time.
    pub fn run(&self) -> Result<RunOutput> {
        let cfg = &self.config;
        let n_steps = cfg.step_count();
        let dt = cfg.time_step_s;
        let snapshot_steps: Vec<usize> = cfg
            .snapshot_times_s
            .iter()
            .map(|&t| ((t / dt - 1e-9).ceil().max(0.0) as usize).min(n_steps))
            .collect();

        let mut state = SimState::new(cfg);
        let mut series = TimeSeries::default();
        let mut snapshots: Vec<Option<Snapshot>> = vec![None; snapshot_steps.len()];
        let mut consumed_grid =
            HistogramGrid::empty(cfg.histogram_bins.0, cfg.histogram_bins.1, cfg.geometry.plate_radius_m);
        let mut ledger_seen = 0usize;

        let mut record = |state: &SimState, consumed_grid: &mut HistogramGrid, ledger_seen: &mut usize, step: usize| {
            for e in &state.consumed_ledger[*ledger_seen..] {
                consumed_grid.add(e.x_m, e.y_m);
            }
            *ledger_seen = state.consumed_ledger.len();
            for (slot, &s) in snapshots.iter_mut().zip(&snapshot_steps) {
                if s == step {
                    *slot = Some(Snapshot {
                        time_s: state.time_s,
                        grid: bin_snapshot(&state.particles, &cfg.geometry, cfg.histogram_bins),
                        consumed_grid: consumed_grid.clone(),
                    });
                }
            }
        };

        series.record(&state);
        record(&state, &mut consumed_grid, &mut ledger_seen, 0);
        for step in 1..=n_steps {
            self.step(&mut state)?;
            record(&state, &mut consumed_grid, &mut ledger_seen, step);
            if step % cfg.timeseries_stride == 0 || step == n_steps {
                series.record(&state);
            }
        }

        Ok(RunOutput {
            snapshots: snapshots.into_iter().map(|s| s.expect("snapshot step within run")).collect(),
            series,
            ledger: state.consumed_ledger.clone(),
            final_state: state,
        })
    }
}

/// Validates `config` and runs it with `workers` threads (0 = all cores).
pub fn run(config: &SimulationConfig, workers: usize) -> Result<RunOutput> {
    Simulator::new(config, workers)?.run()
}
