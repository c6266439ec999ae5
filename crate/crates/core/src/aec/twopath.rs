use crate::Real;

/// Outcome of one two-path comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathDecision {
    Hold,
    /// Background weights are copied into the foreground.
    Promote,
    /// Background diverged and is reset from the foreground.
    ResetBackground,
    /// Both paths are worse than no filter; the background restarts from
    /// zero.
    ClearBackground,
}

/// Foreground/background residual comparison with smoothed hysteresis.
#[derive(Debug, Clone)]
pub struct TwoPath<T: Real> {
    alpha: T,
    ratio: T,
    fg_smooth: T,
    bg_smooth: T,
}

impl<T: Real> Default for TwoPath<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.9),
            ratio: T::lit(0.9),
            fg_smooth: T::zero(),
            bg_smooth: T::zero(),
        }
    }
}

impl<T: Real> TwoPath<T> {
    pub fn smoothed(&self) -> (T, T) {
        (self.fg_smooth, self.bg_smooth)
    }

    pub fn update(&mut self, mic_energy: T, fg_energy: T, bg_energy: T) -> PathDecision {
        let a = self.alpha;
        self.fg_smooth = a * self.fg_smooth + (T::one() - a) * fg_energy;
        self.bg_smooth = a * self.bg_smooth + (T::one() - a) * bg_energy;
        if bg_energy > mic_energy {
            self.bg_smooth = self.fg_smooth;
            if fg_energy > mic_energy {
                PathDecision::ClearBackground
            } else {
                PathDecision::ResetBackground
            }
        } else if bg_energy < fg_energy && self.bg_smooth < self.ratio * self.fg_smooth {
            self.fg_smooth = self.bg_smooth;
            PathDecision::Promote
        } else {
            PathDecision::Hold
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sustained_better_background_promotes_within_five_frames() {
        let mut tp = TwoPath::<f64>::default();
        for _ in 0..100 {
            assert_eq!(tp.update(10.0, 1.0, 1.0), PathDecision::Hold);
        }
        let trace: Vec<_> = (0..5).map(|_| tp.update(10.0, 1.0, 0.5)).collect();
        assert!(trace.contains(&PathDecision::Promote), "{trace:?}");
        let first = trace.iter().position(|d| *d == PathDecision::Promote).unwrap();
        assert!(trace[..first].iter().all(|d| *d == PathDecision::Hold));
    }

    #[test]
    fn single_better_frame_does_not_promote() {
        let mut tp = TwoPath::<f64>::default();
        for _ in 0..100 {
            tp.update(10.0, 1.0, 1.0);
        }
        assert_eq!(tp.update(10.0, 1.0, 0.8), PathDecision::Hold);
    }

    #[test]
    fn diverged_background_is_reset() {
        let mut tp = TwoPath::<f64>::default();
        assert_eq!(tp.update(1.0, 0.5, 2.0), PathDecision::ResetBackground);
        let (fg, bg) = tp.smoothed();
        assert_eq!(fg, bg);
    }

    #[test]
    fn background_restarts_when_foreground_is_also_worse() {
        let mut tp = TwoPath::<f64>::default();
        assert_eq!(tp.update(1.0, 1.5, 2.0), PathDecision::ClearBackground);
    }

    #[test]
    fn equal_energies_never_promote() {
        let mut tp = TwoPath::<f64>::default();
        for i in 0..200 {
            let e = 1.0 + (i % 7) as f64;
            assert_eq!(tp.update(100.0, e, e), PathDecision::Hold);
        }
    }
}
