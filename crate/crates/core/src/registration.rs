//! Joint rotational alignment, temporal alignment and Fréchet-mean
//! estimation for a collection of trajectories.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::{self, PreShape, Rotation, TangentVector};
use crate::trajectory::{apply_warp, trajectory_exp, trajectory_log, TangentField, Trajectory};
use crate::tsrvf::{compute_tsrvf, TsrvfRep};
use crate::warp::{optimal_warp, WarpingFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub max_iterations: usize,
    pub step_size: f64,
    pub tolerance: f64,
    /// Temporal alignment on/off; off reproduces rotation-only registration.
    pub dp_enabled: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            max_iterations: 40,
            step_size: 0.1,
            tolerance: 1e-5,
            dp_enabled: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "step size must lie in (0, 1], got {}",
                self.step_size
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Karcher mean of a set of shapes.
#[derive(Clone, Debug)]
pub struct StaticMean {
    pub mean: PreShape,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared shape distances to the mean.
    pub objective: f64,
}

fn sum_sq_shape_distances(p: &PreShape, shapes: &[PreShape]) -> f64 {
    shapes
        .iter()
        .map(|s| kendall::shape_distance(p, s).powi(2))
        .sum()
}

/// Gradient-descent Karcher mean in shape space, started from the first
/// shape. Returns the best iterate seen; `converged` is false when the
/// update norm never fell below the tolerance.
pub fn static_frechet_mean(shapes: &[PreShape], cfg: &RegistrationConfig) -> Result<StaticMean> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty set".into()))?;
    static_frechet_mean_from(shapes, first, cfg)
}

/// As [`static_frechet_mean`], started from `initial`.
pub fn static_frechet_mean_from(
    shapes: &[PreShape],
    initial: &PreShape,
    cfg: &RegistrationConfig,
) -> Result<StaticMean> {
    cfg.validate()?;
    if shapes.is_empty() {
        return Err(Error::InvalidInput("mean of an empty set".into()));
    }
    for s in shapes {
        initial.same_dims(s)?;
    }
    let first = initial;
    let n = shapes.len() as f64;
    let mut current = first.clone();
    let mut best = StaticMean {
        mean: current.clone(),
        converged: false,
        iterations: 0,
        objective: sum_sq_shape_distances(&current, shapes),
    };
    for it in 1..=cfg.max_iterations {
        let mut avg = vec![0.0; first.k() * first.m()];
        for s in shapes {
            let aligned = kendall::align_to(&current, s);
            let v = kendall::log_map(&current, &aligned)?;
            avg.iter_mut().zip(v.as_slice()).for_each(|(a, x)| *a += x / n);
        }
        let step = kendall::project_to_tangent(&current, &avg).scaled(cfg.step_size);
        let update = step.norm();
        current = kendall::exp_map(&current, &step)?;
        let objective = sum_sq_shape_distances(&current, shapes);
        if objective <= best.objective {
            best = StaticMean {
                mean: current.clone(),
                converged: false,
                iterations: it,
                objective,
            };
        }
        if update < cfg.tolerance {
            best.converged = true;
            best.iterations = it;
            break;
        }
    }
    Ok(best)
}

/// A trajectory after rotational and (optionally) temporal alignment to a
/// mean trajectory.
#[derive(Clone, Debug)]
pub struct AlignedTrajectory {
    pub aligned: Trajectory,
    pub warp: WarpingFunction,
    /// Rotation applied to each input frame before warping.
    pub rotations: Vec<Rotation>,
}

/// Everything needed to align a new trajectory against a fitted mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentTarget {
    mean: Trajectory,
    reference: PreShape,
    mean_tsrvf: Option<TsrvfRep>,
}

impl AlignmentTarget {
    pub fn new(mean: Trajectory, reference: PreShape, temporal: bool) -> Result<Self> {
        let mean_tsrvf = if temporal {
            Some(compute_tsrvf(&mean, &reference)?)
        } else {
            None
        };
        Ok(AlignmentTarget {
            mean,
            reference,
            mean_tsrvf,
        })
    }

    pub fn mean(&self) -> &Trajectory {
        &self.mean
    }

    pub fn reference(&self) -> &PreShape {
        &self.reference
    }

    pub fn temporal(&self) -> bool {
        self.mean_tsrvf.is_some()
    }

    /// Per-frame rotation to the mean. When temporal, the warp is instead
    /// estimated on the rotation-continuous trajectory under a single global
    /// rotation, applied, and followed by the per-frame rotation.
    pub fn align(&self, traj: &Trajectory) -> Result<AlignedTrajectory> {
        self.align_guarded(traj, None)
    }

    /// As [`align`](Self::align), but keeps `fallback` when the new optimal
    /// warp would leave the trajectory farther from the mean.
    pub fn align_guarded(
        &self,
        traj: &Trajectory,
        fallback: Option<&WarpingFunction>,
    ) -> Result<AlignedTrajectory> {
        let t = self.mean.len();
        if traj.len() != t {
            return Err(Error::mismatch(format!("{t} frames"), format!("{} frames", traj.len())));
        }
        let rotations: Vec<Rotation> = traj
            .frames()
            .iter()
            .zip(self.mean.frames())
            .map(|(f, mu)| kendall::optimal_rotation(mu, f).rotation)
            .collect();
        let rotated = Trajectory::new(
            traj.frames()
                .iter()
                .zip(&rotations)
                .map(|(f, r)| f.rotated(r))
                .collect(),
        )?;
        match &self.mean_tsrvf {
            None => Ok(AlignedTrajectory {
                aligned: rotated,
                warp: WarpingFunction::identity(t),
                rotations,
            }),
            Some(q_mean) => {
                let smooth = self.globally_rotated(&traj.rotation_continuous())?;
                let q = compute_tsrvf(&smooth, &self.reference)?;
                let warp = optimal_warp(q_mean, &q)?;
                let aligned = apply_warp(&smooth, &warp)?.aligned_to(&self.mean)?;
                if let Some(prev) = fallback {
                    let kept = apply_warp(&smooth, prev)?.aligned_to(&self.mean)?;
                    if framewise_sq_distance(&self.mean, &kept) < framewise_sq_distance(&self.mean, &aligned) {
                        return Ok(AlignedTrajectory {
                            aligned: kept,
                            warp: prev.clone(),
                            rotations,
                        });
                    }
                }
                Ok(AlignedTrajectory {
                    aligned,
                    warp,
                    rotations,
                })
            }
        }
    }

    /// One rotation for the whole trajectory, fitted against the mean with
    /// all frames stacked.
    fn globally_rotated(&self, traj: &Trajectory) -> Result<Trajectory> {
        let (k, m) = (self.mean.k(), self.mean.m());
        let rows = k * traj.len();
        let fit = kendall::optimal_rotation_raw(&self.mean.to_flat(), &traj.to_flat(), rows, m);
        Trajectory::new(
            traj.frames()
                .iter()
                .map(|f| f.rotated(&fit.rotation))
                .collect(),
        )
    }

    /// Shooting vector of an aligned trajectory at the mean.
    pub fn shooting(&self, aligned: &Trajectory) -> Result<TangentField> {
        trajectory_log(&self.mean, aligned)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub mean_update_norm: f64,
}

#[derive(Clone, Debug)]
pub struct RegistrationResult {
    pub mean: Trajectory,
    pub aligned: Vec<Trajectory>,
    pub shooting: Vec<TangentField>,
    pub warps: Vec<WarpingFunction>,
    /// `rotations[n][t]` maps frame `t` of input `n` onto the mean.
    pub rotations: Vec<Vec<Rotation>>,
    pub objective_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
    /// Reference preshape of all TSRVFs, fixed after the first iteration.
    pub reference: PreShape,
    pub converged: bool,
    /// Number of mean updates performed.
    pub iterations: usize,
    pub medoid: usize,
}

impl RegistrationResult {
    /// Plain-text log: one `iteration objective ‖v̄‖` line per evaluation.
    pub fn convergence_log(&self) -> String {
        let mut out = String::from("# iteration objective mean_update_norm\n");
        for r in &self.log {
            let _ = writeln!(out, "{} {:.17e} {:.17e}", r.iteration, r.objective, r.mean_update_norm);
        }
        out
    }

    pub fn alignment_target(&self, temporal: bool) -> Result<AlignmentTarget> {
        AlignmentTarget::new(self.mean.clone(), self.reference.clone(), temporal)
    }
}

fn check_collection(trajectories: &[Trajectory]) -> Result<()> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory collection".into()))?;
    for (n, tr) in trajectories.iter().enumerate() {
        if tr.len() != first.len() || tr.k() != first.k() || tr.m() != first.m() {
            return Err(Error::mismatch(
                format!("{}x{}x{}", first.len(), first.k(), first.m()),
                format!("{}x{}x{}", tr.len(), tr.k(), tr.m()),
            )
            .at_trajectory(n));
        }
    }
    Ok(())
}

fn framewise_sq_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.frames()
        .iter()
        .zip(b.frames())
        .map(|(x, y)| kendall::shape_distance(x, y).powi(2))
        .sum()
}

/// Index of the trajectory with the smallest summed frame-wise squared
/// shape distance to all others; ties go to the lowest index.
pub fn medoid(trajectories: &[Trajectory]) -> usize {
    let n = trajectories.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| framewise_sq_distance(&trajectories[a], &trajectories[b]))
        .collect();
    let mut totals = vec![0.0; n];
    for (&(a, b), d) in pairs.iter().zip(&dists) {
        totals[a] += d;
        totals[b] += d;
    }
    let mut best = 0;
    for (i, t) in totals.iter().enumerate() {
        if *t < totals[best] {
            best = i;
        }
    }
    best
}

/// Iterates (i) per-frame rotational alignment to the current mean,
/// (ii) TSRVF temporal alignment when enabled, and (iii) the mean update
/// `μ ← Exp_μ(ε·v̄)`, until `‖v̄‖` drops below the tolerance.
pub fn register_collection(
    trajectories: &[Trajectory],
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register_inner(trajectories, None, cfg)
}

/// Registration started from a given mean and TSRVF reference instead of
/// the medoid; `medoid` in the result is then `usize::MAX`.
pub fn register_collection_from(
    trajectories: &[Trajectory],
    start: &AlignmentTarget,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register_inner(trajectories, Some(start), cfg)
}

fn register_inner(
    trajectories: &[Trajectory],
    start: Option<&AlignmentTarget>,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    check_collection(trajectories)?;
    let (t, k, m) = (trajectories[0].len(), trajectories[0].k(), trajectories[0].m());

    // Consecutive frames in optimal relative position, so that each input is
    // determined up to one global rotation.
    let inputs: Vec<Trajectory> = trajectories.par_iter().map(Trajectory::rotation_continuous).collect();
    let (medoid, mut mean, reference) = match start {
        Some(s) => {
            let mt = s.mean();
            if mt.len() != t || mt.k() != k || mt.m() != m {
                return Err(Error::mismatch(
                    format!("{t}x{k}x{m}"),
                    format!("{}x{}x{}", mt.len(), mt.k(), mt.m()),
                ));
            }
            (usize::MAX, mt.clone(), s.reference().clone())
        }
        None => {
            let medoid = medoid(&inputs);
            let mean = inputs[medoid].clone();
            let rotated0: Vec<Trajectory> = inputs
                .par_iter()
                .map(|tr| tr.aligned_to(&mean))
                .collect::<Result<_>>()?;
            let all_frames: Vec<PreShape> =
                rotated0.iter().flat_map(|tr| tr.frames().iter().cloned()).collect();
            let reference_cfg = RegistrationConfig {
                step_size: 1.0,
                ..cfg.clone()
            };
            // Start the reference search from the middle frame of the mean.
            let reference = static_frechet_mean_from(&all_frames, mean.frame(t / 2), &reference_cfg)?.mean;
            (medoid, mean, reference)
        }
    };

    let n = inputs.len();
    let mut log = Vec::new();
    let mut objective_history = Vec::new();
    let mut iteration = 0;
    let mut previous_warps = vec![WarpingFunction::identity(t); n];
    loop {
        let target = AlignmentTarget::new(mean.clone(), reference.clone(), cfg.dp_enabled)
            .map_err(|e| Error::InvalidInput(format!("mean trajectory: {e}")))?;
        let aligned: Vec<AlignedTrajectory> = inputs
            .par_iter()
            .enumerate()
            .map(|(i, tr)| {
                target
                    .align_guarded(tr, Some(&previous_warps[i]))
                    .map_err(|e| e.at_trajectory(i))
            })
            .collect::<Result<_>>()?;
        let shooting: Vec<TangentField> = aligned
            .par_iter()
            .enumerate()
            .map(|(i, a)| target.shooting(&a.aligned).map_err(|e| e.at_trajectory(i)))
            .collect::<Result<_>>()?;

        let objective: f64 = shooting.iter().map(|v| v.norm().powi(2)).sum();
        let mean_field = TangentField::mean(&shooting)?;
        let update_norm = mean_field.norm();
        objective_history.push(objective);
        log.push(IterationRecord {
            iteration,
            objective,
            mean_update_norm: update_norm,
        });

        previous_warps = aligned.iter().map(|a| a.warp.clone()).collect();
        let converged = update_norm < cfg.tolerance;
        if converged || iteration == cfg.max_iterations {
            let mut warps = Vec::with_capacity(n);
            let mut rotations = Vec::with_capacity(n);
            let mut aligned_out = Vec::with_capacity(n);
            for a in aligned {
                warps.push(a.warp);
                rotations.push(a.rotations);
                aligned_out.push(a.aligned);
            }
            return Ok(RegistrationResult {
                mean,
                aligned: aligned_out,
                shooting,
                warps,
                rotations,
                objective_history,
                log,
                reference,
                converged,
                iterations: iteration,
                medoid,
            });
        }

        // Re-project each frame to absorb drift before shooting.
        let step = TangentField::new(
            mean_field
                .vectors()
                .iter()
                .zip(mean.frames())
                .map(|(v, f)| kendall::project_to_tangent(f, v.as_slice()).scaled(cfg.step_size))
                .collect::<Vec<TangentVector>>(),
        );
        mean = trajectory_exp(&mean, &step)?;
        debug_assert_eq!((mean.k(), mean.m()), (k, m));
        iteration += 1;
    }
}
