//! Monotone piecewise-polynomial profiles with certified slope bounds.
//!
//! Every retraction map in this crate is assembled from a scalar profile
//! `rho` that is exactly linear outside a transition window `[x0, x1]` and
//! C^2 across it. Inside the window the derivative runs: cubic ramp from the
//! left slope `a0` up to a plateau `s`, constant `s`, cubic ramp down to the
//! right slope `a1`. The plateau value `s` is solved from the integral
//! constraint `rho(x1) = v1`, so the exact slope bound `max(a0, a1, s)` is
//! known in closed form at construction time.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Cubic smoothstep on [0,1]: 0 -> 1 with zero end slopes.
#[inline]
pub fn smoothstep3(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Integral of [`smoothstep3`] from 0 to `t` (clamped).
#[inline]
pub fn smoothstep3_integral(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t - 0.5 * t * t * t * t
}

/// Quintic smoothstep on [0,1]: 0 -> 1 with zero end slope and curvature.
#[inline]
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Monotone profile, linear outside `[x0, x1]`, C^2 inside.
///
/// Left of `x0` the value is `v0 + a0 (x - x0)`; right of `x1` it is
/// `v1 + a1 (x - x1)`. `w` is the ramp width, `s` the plateau slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    x0: f64,
    x1: f64,
    v0: f64,
    v1: f64,
    a0: f64,
    a1: f64,
    w: f64,
    s: f64,
}

impl Profile {
    /// Builds the profile through `(x0, v0)` and `(x1, v1)` with end slopes
    /// `a0`, `a1`, keeping every slope `<= slope_cap`.
    ///
    /// Fails when the mean slope of the window already reaches the cap; the
    /// error reports the smallest cap this window could satisfy.
    pub fn monotone(
        x0: f64,
        x1: f64,
        v0: f64,
        v1: f64,
        a0: f64,
        a1: f64,
        slope_cap: f64,
    ) -> Result<Profile> {
        let width = x1 - x0;
        let rise = v1 - v0;
        if !(width > 0.0) || rise < 0.0 || a0 < 0.0 || a1 < 0.0 {
            return Err(Error::Map(format!(
                "profile window [{x0}, {x1}] with rise {rise} and slopes ({a0}, {a1}) is not monotone"
            )));
        }
        let mean = rise / width;
        if mean >= slope_cap {
            return Err(Error::Map(format!(
                "profile mean slope {mean:.6} reaches the cap {slope_cap:.6}; \
                 the window needs a cap above {mean:.6}"
            )));
        }
        // s(w) = (rise - w (a0+a1)/2) / (width - w). Pick the ramp as wide as
        // the cap allows (bounded by a third of the window so the plateau
        // survives); s(w) is monotone in w so the cap check below is exact.
        let beta = 0.5 * (a0 + a1);
        let w_cap = if slope_cap > beta {
            0.9 * (slope_cap * width - rise) / (slope_cap - beta)
        } else {
            width
        };
        let w = (width / 3.0).min(w_cap.max(1e-12 * width));
        let s = (rise - w * beta) / (width - w);
        if !(s >= 0.0) || s > slope_cap {
            return Err(Error::Map(format!(
                "profile plateau slope {s:.6} escapes [0, {slope_cap:.6}]"
            )));
        }
        Ok(Profile {
            x0,
            x1,
            v0,
            v1,
            a0,
            a1,
            w,
            s,
        })
    }

    /// Identity up to `x0`, constant `v1` from `x1` on. Requires `v0 == x0`.
    pub fn identity_then_flat(x0: f64, x1: f64, v1: f64, slope_cap: f64) -> Result<Profile> {
        Profile::monotone(x0, x1, x0, v1, 1.0, 0.0, slope_cap)
    }

    /// Constant 0 up to 0, identity (`rho(x) = x`) from `window` on.
    pub fn flat_then_identity(window: f64, slope_cap: f64) -> Result<Profile> {
        Profile::monotone(0.0, window, 0.0, window, 0.0, 1.0, slope_cap)
    }

    /// Constant `v` up to `x0`, equal to `x - (x0 - v)` from `x1` on,
    /// so the right branch is the identity shifted to pass through `(x1, v1)`.
    pub fn flat_then_shifted_identity(x0: f64, x1: f64, v: f64, slope_cap: f64) -> Result<Profile> {
        Profile::monotone(x0, x1, v, v + (x1 - x0), 0.0, 1.0, slope_cap)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    /// True when the branch left of the window is exactly `rho(x) = x`.
    pub fn identity_below(&self) -> bool {
        self.a0 == 1.0 && self.v0 == self.x0
    }

    /// True when the branch right of the window is exactly `rho(x) = x`.
    pub fn identity_above(&self) -> bool {
        self.a1 == 1.0 && (self.v1 - self.x1).abs() < 1e-15
    }

    /// Largest slope attained anywhere.
    pub fn max_slope(&self) -> f64 {
        self.s.max(self.a0).max(self.a1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.x0 {
            return self.v0 + self.a0 * (x - self.x0);
        }
        if x >= self.x1 {
            return self.v1 + self.a1 * (x - self.x1);
        }
        let (w, s) = (self.w, self.s);
        let up_end = self.x0 + w;
        let down_start = self.x1 - w;
        if x < up_end {
            let t = (x - self.x0) / w;
            self.v0 + self.a0 * (x - self.x0) + (s - self.a0) * w * smoothstep3_integral(t)
        } else if x <= down_start {
            self.value_at_up_end() + s * (x - up_end)
        } else {
            let t = (x - down_start) / w;
            self.value_at_down_start() + s * (x - down_start)
                + (self.a1 - s) * w * smoothstep3_integral(t)
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x <= self.x0 {
            return self.a0;
        }
        if x >= self.x1 {
            return self.a1;
        }
        let (w, s) = (self.w, self.s);
        if x < self.x0 + w {
            self.a0 + (s - self.a0) * smoothstep3((x - self.x0) / w)
        } else if x <= self.x1 - w {
            s
        } else {
            s + (self.a1 - s) * smoothstep3((x - (self.x1 - w)) / w)
        }
    }

    fn value_at_up_end(&self) -> f64 {
        self.v0 + 0.5 * self.w * (self.a0 + self.s)
    }

    fn value_at_down_start(&self) -> f64 {
        self.value_at_up_end() + self.s * (self.x1 - self.x0 - 2.0 * self.w)
    }

    /// Certified upper bound for `sup_{u > 0} rho(u) rho'(u) / u`, the area
    /// distortion of the radial map `u e^{i t} -> rho(u) e^{i t}`.
    ///
    /// Evaluated by dense sampling over the only region where it can exceed
    /// the trivial bounds, padded by a step-times-Lipschitz margin.
    pub fn radial_jacobian_sup(&self) -> f64 {
        assert!(self.x0 >= 0.0 && self.v0 >= 0.0, "radial profile expected");
        let g = |u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                self.eval(u) * self.deriv(u) / u
            }
        };
        // Outside the window the profile is linear, so g is monotone toward
        // its endpoint values there; sample the window plus both endpoints.
        let mut sup: f64 = 0.0;
        let lo = self.x0.max(1e-9);
        let hi = self.x1;
        let n = 20_000;
        let du = (hi - lo) / n as f64;
        for k in 0..=n {
            sup = sup.max(g(lo + du * k as f64));
        }
        // Left branch: slope a0 through (x0, v0). If it passes through the
        // origin g = a0^2 exactly, otherwise g is monotone on (0, x0].
        if self.a0 > 0.0 {
            sup = sup.max(g(lo).max(self.a0 * self.a0));
        }
        // Right branch: g(u) -> a1^2 monotonically; endpoint dominates.
        if self.a1 > 0.0 {
            sup = sup.max(g(hi).max(self.a1 * self.a1));
        }
        // Lipschitz padding for the sampled window.
        let m = self.max_slope();
        let lip = if lo > 0.0 { 2.0 * m * m / lo + m * m } else { 0.0 };
        sup + du * lip
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_deriv(p: &Profile, x: f64) -> f64 {
        let h = 1e-7;
        (p.eval(x + h) - p.eval(x - h)) / (2.0 * h)
    }

    #[test]
    fn identity_then_flat_shape() {
        let p = Profile::identity_then_flat(0.5, 1.0, 1.0, 1.2).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.25), 0.25);
        assert_eq!(p.eval(0.5), 0.5);
        assert_eq!(p.eval(1.0), 1.0);
        assert_eq!(p.eval(2.0), 1.0);
        assert_eq!(p.deriv(0.3), 1.0);
        assert_eq!(p.deriv(1.7), 0.0);
        assert!(p.max_slope() <= 1.2);
        // Mean slope of the window is 1, so the plateau must exceed 1.
        assert!(p.max_slope() > 1.0);
    }

    #[test]
    fn flat_then_identity_shape() {
        let p = Profile::flat_then_identity(0.1, 1.3).unwrap();
        assert_eq!(p.eval(-3.0), 0.0);
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(0.1), 0.1);
        assert_eq!(p.eval(5.0), 5.0);
        assert_eq!(p.deriv(-1.0), 0.0);
        assert_eq!(p.deriv(0.2), 1.0);
    }

    #[test]
    fn shifted_identity_shape() {
        // Zero on [0, 0.1], x - 0.1 from 0.5 on.
        let p = Profile::flat_then_shifted_identity(0.1, 0.5, 0.0, 1.1).unwrap();
        assert_eq!(p.eval(0.05), 0.0);
        assert_eq!(p.eval(0.5), 0.4);
        assert_eq!(p.eval(1.0), 0.9);
        assert_eq!(p.deriv(0.8), 1.0);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = Profile::monotone(0.3, 1.1, 0.2, 0.9, 0.5, 1.0, 1.4).unwrap();
        for k in 0..200 {
            let x = -0.2 + k as f64 * 0.01;
            let d = fd_deriv(&p, x);
            assert!(
                (d - p.deriv(x)).abs() < 1e-5,
                "x={x} fd={d} analytic={}",
                p.deriv(x)
            );
        }
    }

    #[test]
    fn continuity_at_window_ends() {
        let p = Profile::identity_then_flat(0.5, 1.0, 1.0, 1.2).unwrap();
        for x in [0.5, 1.0] {
            let below = p.eval(x - 1e-12);
            let above = p.eval(x + 1e-12);
            assert!((below - above).abs() < 1e-10);
        }
    }

    #[test]
    fn slope_cap_rejected_when_unreachable() {
        // Mean slope 1 cannot fit under cap 1.
        assert!(Profile::identity_then_flat(0.5, 1.0, 1.0, 1.0).is_err());
        // Negative rise rejected.
        assert!(Profile::monotone(0.0, 1.0, 1.0, 0.5, 0.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn monotone_on_dense_grid() {
        let p = Profile::monotone(0.0, 0.2, 0.0, 0.19, 0.0, 1.0, 1.3).unwrap();
        let mut prev = p.eval(-0.5);
        for k in 1..1000 {
            let v = p.eval(-0.5 + k as f64 * 0.002);
            assert!(v + 1e-14 >= prev);
            prev = v;
        }
    }

    #[test]
    fn radial_jacobian_sup_bounds_sampled_product() {
        let p = Profile::identity_then_flat(0.5, 1.0, 1.0, 1.05).unwrap();
        let bound = p.radial_jacobian_sup();
        for k in 1..4000 {
            let u = k as f64 * 1e-3;
            let g = p.eval(u) * p.deriv(u) / u;
            assert!(g <= bound + 1e-12, "u={u} g={g} bound={bound}");
        }
        // The identity part alone forces the product to reach 1.
        assert!(bound >= 1.0);
        assert!(bound <= 1.05 * 1.05);
    }
}
