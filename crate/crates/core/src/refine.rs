//! Two-stage cleanup of contact artifacts in a motion clip.
//!
//! Stage A is a hard projection: every maximal contact run of a foot is
//! pinned to its mean horizontal position at ground height, and penetrating
//! feet are clamped up to the ground plane.  Stage B is projected gradient
//! descent with a backtracking line search on
//!
//! ```text
//! E(x) = w_fid  * sum |x - x0|^2
//!      + w_phys * (3T - J(x))
//!      + w_smooth * sum_t |D2(x - x0)|^2
//!      + w_limb * sum (bone length - rest length)^2
//! ```
//!
//! where `x0` is the unrefined clip and `J` is the contact-consistency
//! objective evaluated under indicators detected once from `x0` and then
//! frozen.  The curvature penalty acts on the correction `x - x0` rather
//! than on `x` itself; penalizing the motion's own curvature would drag
//! every clean clip toward a straight line, while the correction form makes
//! an already-plausible clip a global minimum, so it passes through
//! untouched.
//!
//! Foot coordinates on contact frames, and foot heights on penetration
//! frames, are equality constraints: they are excluded from the decision
//! variables, which is what makes the zero-skate and zero-penetration
//! guarantees exact rather than asymptotic.  Free foot heights are clamped
//! to the ground plane after every step.

use serde::{Deserialize, Serialize};

use crate::contact::{detect_contacts, ContactParams, ContactTrack};
use crate::motion::{MotionClip, MotionError};
use crate::plausibility::{sequence_objective, PlausibilityReport};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub w_fid: f64,
    pub w_phys: f64,
    pub w_smooth: f64,
    pub w_limb: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub tol_rel: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            w_fid: 1.0,
            w_phys: 10.0,
            w_smooth: 0.1,
            w_limb: 1.0,
            max_iters: 500,
            step_init: 1e-2,
            tol_rel: 1e-6,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), MotionError> {
        for (name, w) in [
            ("w_fid", self.w_fid),
            ("w_phys", self.w_phys),
            ("w_smooth", self.w_smooth),
            ("w_limb", self.w_limb),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(MotionError::validation(name, "must be finite and >= 0"));
            }
        }
        if self.max_iters < 1 {
            return Err(MotionError::validation("max_iters", "must be >= 1"));
        }
        if !(self.step_init > 0.0) || !self.step_init.is_finite() {
            return Err(MotionError::validation("step_init", "must be finite and > 0"));
        }
        if !(self.tol_rel > 0.0) {
            return Err(MotionError::validation("tol_rel", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub refined: MotionClip,
    /// Accepted descent steps taken in stage B.
    pub iterations: usize,
    /// Energy after stage A followed by the energy after each accepted
    /// step; strictly decreasing past the first entry.
    pub objective_trace: Vec<f64>,
    /// Scored on the unrefined clip under the frozen indicators.
    pub report_before: PlausibilityReport,
    /// Scored on the refined clip under the same frozen indicators.
    pub report_after: PlausibilityReport,
}

fn foot_runs(contact: &[[bool; 2]], foot: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, c) in contact.iter().enumerate() {
        match (c[foot], start) {
            (true, None) => start = Some(t),
            (false, Some(a)) => {
                runs.push((a, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        runs.push((a, contact.len() - 1));
    }
    runs
}

/// Stage A: pin contact runs to their mean horizontal position at ground
/// height and clamp penetrating feet up to the ground plane.  All other
/// joints pass through untouched; a clip that is already feasible comes
/// back bit-identical.
pub fn project_contacts(clip: &MotionClip, track: &ContactTrack) -> MotionClip {
    let mut out = clip.clone();
    let z_g = clip.ground_height;
    for f in 0..2 {
        let joint = clip.skeleton.foot_joints[f];
        for (a, b) in foot_runs(&track.contact, f) {
            let n = (b - a + 1) as f64;
            // Anchored mean keeps a constant-position run bit-identical.
            let (x0, y0) = (out.frames[a][joint][0], out.frames[a][joint][1]);
            let (mut dx, mut dy) = (0.0, 0.0);
            for t in a..=b {
                dx += out.frames[t][joint][0] - x0;
                dy += out.frames[t][joint][1] - y0;
            }
            let pinned = [x0 + dx / n, y0 + dy / n, z_g];
            for t in a..=b {
                out.frames[t][joint] = pinned;
            }
        }
        for (t, pen) in track.penetration.iter().enumerate() {
            if pen[f] && out.frames[t][joint][2] < z_g {
                out.frames[t][joint][2] = z_g;
            }
        }
    }
    out
}

/// Per-coordinate freeze state of the two feet; non-foot joints are always
/// free.
#[derive(Clone, Copy, PartialEq)]
enum Freeze {
    No,
    Z,
    All,
}

struct Objective<'a> {
    anchor: &'a [Vec<[f64; 3]>],
    track: &'a ContactTrack,
    skeleton_parents: &'a [Option<usize>],
    rest_lengths: &'a [f64],
    foot_joints: [usize; 2],
    z_g: f64,
    params: RefineParams,
    freeze: Vec<[Freeze; 2]>,
}

impl<'a> Objective<'a> {
    fn new(
        original: &'a MotionClip,
        track: &'a ContactTrack,
        params: RefineParams,
    ) -> Objective<'a> {
        let freeze = (0..original.len())
            .map(|t| {
                let mut row = [Freeze::No; 2];
                for f in 0..2 {
                    if track.contact[t][f] {
                        row[f] = Freeze::All;
                    } else if track.penetration[t][f] {
                        row[f] = Freeze::Z;
                    }
                }
                row
            })
            .collect();
        Objective {
            anchor: &original.frames,
            track,
            skeleton_parents: &original.skeleton.parents,
            rest_lengths: &original.skeleton.bone_lengths,
            foot_joints: original.skeleton.foot_joints,
            z_g: original.ground_height,
            params,
            freeze,
        }
    }

    /// Plausibility deficit 3T - J, accumulated as a sum of non-negative
    /// per-term losses so a clean clip scores exactly 0.
    fn physics_deficit(&self, frames: &[Vec<[f64; 3]>]) -> f64 {
        let mut deficit = 0.0;
        for t in 0..frames.len() {
            if t >= 1 {
                for f in 0..2 {
                    if self.track.contact[t][f] && self.track.contact[t - 1][f] {
                        let j = self.foot_joints[f];
                        let (a, b) = (frames[t - 1][j], frames[t][j]);
                        let d2 = (b[0] - a[0]).powi(2)
                            + (b[1] - a[1]).powi(2)
                            + (b[2] - a[2]).powi(2);
                        deficit += 0.5 * -f64::exp_m1(-d2);
                    }
                }
            }
            if self.track.floating[t] {
                let z0 = frames[t][self.foot_joints[0]][2];
                let z1 = frames[t][self.foot_joints[1]][2];
                let gap = z0.min(z1) - self.z_g;
                deficit += -f64::exp_m1(-gap * gap);
            }
            for f in 0..2 {
                if self.track.penetration[t][f] {
                    let depth = self.z_g - frames[t][self.foot_joints[f]][2];
                    deficit += 0.5 * -f64::exp_m1(-depth * depth);
                }
            }
        }
        deficit
    }

    fn energy(&self, frames: &[Vec<[f64; 3]>]) -> f64 {
        let p = &self.params;
        let mut fid = 0.0;
        let mut smooth = 0.0;
        let mut limb = 0.0;
        let t_len = frames.len();
        let n_joints = frames[0].len();
        for t in 0..t_len {
            for j in 0..n_joints {
                for c in 0..3 {
                    let d = frames[t][j][c] - self.anchor[t][j][c];
                    fid += d * d;
                }
                if let Some(parent) = self.skeleton_parents[j] {
                    let d = sub(frames[t][j], frames[t][parent]);
                    let err = norm(d) - self.rest_lengths[j];
                    limb += err * err;
                }
            }
        }
        for t in 1..t_len.saturating_sub(1) {
            for j in 0..n_joints {
                for c in 0..3 {
                    let dd = (frames[t + 1][j][c] - self.anchor[t + 1][j][c])
                        - 2.0 * (frames[t][j][c] - self.anchor[t][j][c])
                        + (frames[t - 1][j][c] - self.anchor[t - 1][j][c]);
                    smooth += dd * dd;
                }
            }
        }
        p.w_fid * fid + p.w_phys * self.physics_deficit(frames) + p.w_smooth * smooth
            + p.w_limb * limb
    }

    fn gradient(&self, frames: &[Vec<[f64; 3]>], grad: &mut [Vec<[f64; 3]>]) {
        let p = &self.params;
        let t_len = frames.len();
        let n_joints = frames[0].len();
        for g in grad.iter_mut() {
            for v in g.iter_mut() {
                *v = [0.0; 3];
            }
        }
        for t in 0..t_len {
            for j in 0..n_joints {
                for c in 0..3 {
                    grad[t][j][c] += 2.0 * p.w_fid * (frames[t][j][c] - self.anchor[t][j][c]);
                }
                if let Some(parent) = self.skeleton_parents[j] {
                    let d = sub(frames[t][j], frames[t][parent]);
                    let len = norm(d);
                    if len > 1e-12 {
                        let coef = 2.0 * p.w_limb * (len - self.rest_lengths[j]) / len;
                        for c in 0..3 {
                            grad[t][j][c] += coef * d[c];
                            grad[t][parent][c] -= coef * d[c];
                        }
                    }
                }
            }
            if t >= 1 {
                for f in 0..2 {
                    if self.track.contact[t][f] && self.track.contact[t - 1][f] {
                        let j = self.foot_joints[f];
                        let d = sub(frames[t][j], frames[t - 1][j]);
                        let e = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).exp();
                        for c in 0..3 {
                            let g = p.w_phys * e * d[c];
                            grad[t][j][c] += g;
                            grad[t - 1][j][c] -= g;
                        }
                    }
                }
            }
            if self.track.floating[t] {
                let z0 = frames[t][self.foot_joints[0]][2];
                let z1 = frames[t][self.foot_joints[1]][2];
                let (j, gap) = if z0 <= z1 {
                    (self.foot_joints[0], z0 - self.z_g)
                } else {
                    (self.foot_joints[1], z1 - self.z_g)
                };
                grad[t][j][2] += p.w_phys * 2.0 * gap * (-gap * gap).exp();
            }
            for f in 0..2 {
                if self.track.penetration[t][f] {
                    let j = self.foot_joints[f];
                    let depth = self.z_g - frames[t][j][2];
                    grad[t][j][2] -= p.w_phys * depth * (-depth * depth).exp();
                }
            }
        }
        for t in 1..t_len.saturating_sub(1) {
            for j in 0..n_joints {
                for c in 0..3 {
                    let dd = (frames[t + 1][j][c] - self.anchor[t + 1][j][c])
                        - 2.0 * (frames[t][j][c] - self.anchor[t][j][c])
                        + (frames[t - 1][j][c] - self.anchor[t - 1][j][c]);
                    let coef = 2.0 * p.w_smooth * dd;
                    grad[t - 1][j][c] += coef;
                    grad[t][j][c] -= 2.0 * coef;
                    grad[t + 1][j][c] += coef;
                }
            }
        }
        for (t, row) in self.freeze.iter().enumerate() {
            for f in 0..2 {
                let j = self.foot_joints[f];
                match row[f] {
                    Freeze::All => grad[t][j] = [0.0; 3],
                    Freeze::Z => grad[t][j][2] = 0.0,
                    Freeze::No => {}
                }
            }
        }
    }

    /// x - step * grad, with free foot heights clamped to the ground plane.
    fn step(
        &self,
        frames: &[Vec<[f64; 3]>],
        grad: &[Vec<[f64; 3]>],
        step: f64,
    ) -> Vec<Vec<[f64; 3]>> {
        let mut out: Vec<Vec<[f64; 3]>> = frames
            .iter()
            .zip(grad.iter())
            .map(|(fr, gr)| {
                fr.iter()
                    .zip(gr.iter())
                    .map(|(x, g)| [x[0] - step * g[0], x[1] - step * g[1], x[2] - step * g[2]])
                    .collect()
            })
            .collect();
        for (t, row) in self.freeze.iter().enumerate() {
            for f in 0..2 {
                if row[f] == Freeze::No {
                    let j = self.foot_joints[f];
                    if out[t][j][2] < self.z_g {
                        out[t][j][2] = self.z_g;
                    }
                }
            }
        }
        out
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Finite-difference probe target: the stage-B energy restricted to the
/// free coordinates.  Exposed for gradient verification.
pub fn descent_energy(
    frames: &MotionClip,
    original: &MotionClip,
    track: &ContactTrack,
    params: &RefineParams,
) -> f64 {
    Objective::new(original, track, *params).energy(&frames.frames)
}

/// Analytic gradient of [`descent_energy`] with frozen coordinates zeroed.
pub fn descent_gradient(
    frames: &MotionClip,
    original: &MotionClip,
    track: &ContactTrack,
    params: &RefineParams,
) -> Vec<Vec<[f64; 3]>> {
    let obj = Objective::new(original, track, *params);
    let mut grad: Vec<Vec<[f64; 3]>> =
        frames.frames.iter().map(|f| vec![[0.0; 3]; f.len()]).collect();
    obj.gradient(&frames.frames, &mut grad);
    grad
}

/// Whether a foot coordinate is excluded from the stage-B decision
/// variables under the given frozen track.
pub fn is_frozen_coord(track: &ContactTrack, t: usize, foot: usize, coord: usize) -> bool {
    if track.contact[t][foot] {
        return true;
    }
    coord == 2 && track.penetration[t][foot]
}

/// Stage B: projected gradient descent from `clip` (normally the stage-A
/// output) under indicators detected from `original` and frozen.
pub fn smooth_refine(
    clip: &MotionClip,
    original: &MotionClip,
    track: &ContactTrack,
    params: &RefineParams,
) -> Result<RefineResult, MotionError> {
    params.validate()?;
    if clip.len() != original.len() || track.len() != clip.len() {
        return Err(MotionError::ShapeMismatch(format!(
            "clip ({} frames), original ({}), and track ({}) must agree",
            clip.len(),
            original.len(),
            track.len()
        )));
    }
    let report_before = sequence_objective(original, track)?;
    let objective = Objective::new(original, track, *params);
    let mut frames = clip.frames.clone();
    let mut energy = objective.energy(&frames);
    if !energy.is_finite() {
        return Err(MotionError::validation(
            "energy",
            "objective is not finite on the input clip",
        ));
    }
    let mut trace = vec![energy];
    let mut grad: Vec<Vec<[f64; 3]>> = frames.iter().map(|f| vec![[0.0; 3]; f.len()]).collect();
    let mut step = params.step_init;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        objective.gradient(&frames, &mut grad);
        let grad_sq: f64 = grad
            .iter()
            .flat_map(|fr| fr.iter())
            .map(|g| g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
            .sum();
        if grad_sq == 0.0 {
            break;
        }
        // Backtracking: halve until the energy strictly decreases.
        let mut accepted = None;
        let mut s = step;
        while s > 1e-18 {
            let candidate = objective.step(&frames, &grad, s);
            let e_new = objective.energy(&candidate);
            if e_new.is_finite() && e_new < energy {
                accepted = Some((candidate, e_new, s));
                break;
            }
            s *= 0.5;
        }
        let Some((next, e_new, s_used)) = accepted else {
            break;
        };
        let rel = (energy - e_new) / energy.abs().max(1.0);
        frames = next;
        energy = e_new;
        trace.push(energy);
        iterations += 1;
        step = s_used * 2.0;
        if rel < params.tol_rel {
            break;
        }
    }
    let mut refined = clip.clone();
    refined.frames = frames;
    let mut report_after = sequence_objective(&refined, track)?;
    // Descent trades plausibility against the penalty terms; never hand
    // back something less plausible than the projection it started from.
    if report_after.objective < sequence_objective(clip, track)?.objective {
        refined = clip.clone();
        report_after = sequence_objective(&refined, track)?;
        trace.truncate(1);
        iterations = 0;
    }
    Ok(RefineResult {
        refined,
        iterations,
        objective_trace: trace,
        report_before,
        report_after,
    })
}

/// Full pass: detect indicators once, project, then descend, all under the
/// supplied contact thresholds.
pub fn refine_clip_with(
    clip: &MotionClip,
    contact: &ContactParams,
    params: &RefineParams,
) -> Result<RefineResult, MotionError> {
    let track = detect_contacts(clip, contact);
    let projected = project_contacts(clip, &track);
    smooth_refine(&projected, clip, &track, params)
}

/// [`refine_clip_with`] under default contact thresholds.
pub fn refine_clip(clip: &MotionClip, params: &RefineParams) -> Result<RefineResult, MotionError> {
    refine_clip_with(clip, &ContactParams::default(), params)
}
