use crate::Real;

/// Learning-rate control driven by a running estimate of filter leakage.
///
/// The residual is modelled as leaked echo plus unrelated signal. The
/// leaked part is estimated by regressing the per-bin residual power on the
/// per-bin far-end power averaged over the filter span, using deviations
/// from running means so that stationary near-end noise drops out. The
/// step is the fraction of residual power explained by leakage, clamped to
/// `[0, mu_max]`: large while the filter is misadjusted, small once the
/// residual is dominated by noise or near-end speech.
#[derive(Debug, Clone)]
pub struct AdaptationControl<T: Real> {
    mu_max: T,
    smoothing: T,
    far_floor: T,
    mean_far: Vec<T>,
    mean_res: Vec<T>,
    cov: T,
    var: T,
    far_sum: T,
    res_sum: T,
    frames: u64,
    warmup: u64,
    mu: T,
    leakage: T,
}

impl<T: Real> AdaptationControl<T> {
    pub fn new(n_bins: usize, mu_max: T) -> Self {
        Self {
            mu_max,
            smoothing: T::lit(0.05),
            far_floor: T::lit(1e-9),
            mean_far: vec![T::zero(); n_bins],
            mean_res: vec![T::zero(); n_bins],
            cov: T::zero(),
            var: T::zero(),
            far_sum: T::zero(),
            res_sum: T::zero(),
            frames: 0,
            warmup: 0,
            mu: T::zero(),
            leakage: T::zero(),
        }
    }

    /// Number of active frames run at `mu_max` before the regression
    /// starts, so that a far-end history that is still filling up does not
    /// bias the statistics.
    pub fn with_warmup(mut self, frames: u64) -> Self {
        self.warmup = frames;
        self
    }

    /// Mean per-bin far-end power below which adaptation is disabled.
    pub fn set_far_floor(&mut self, floor: T) {
        self.far_floor = floor;
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn mu_max(&self) -> T {
        self.mu_max
    }

    /// Estimated fraction of residual power that is leaked echo.
    pub fn leakage(&self) -> T {
        self.leakage
    }

    /// Consumes one frame of per-bin powers and returns the step size.
    ///
    /// `far_power` is the far-end power averaged over the frames covered by
    /// the filter; `residual_power` is the power of the adapting filter's
    /// error.
    pub fn learning_rate_update(&mut self, far_power: &[T], residual_power: &[T]) -> T {
        let n = T::from_len(far_power.len().max(1));
        let sum = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x);
        let far = sum(far_power);
        if far / n <= self.far_floor {
            self.mu = T::zero();
            return self.mu;
        }
        if self.warmup > 0 {
            self.warmup -= 1;
            self.mu = self.mu_max;
            self.leakage = T::one();
            return self.mu;
        }
        self.frames += 1;
        let one = T::one();
        let a = self.smoothing.max(one / T::from_len(self.frames as usize));

        let mut cov = T::zero();
        let mut var = T::zero();
        for i in 0..far_power.len() {
            let df = far_power[i] - self.mean_far[i];
            let de = residual_power[i] - self.mean_res[i];
            cov += df * de;
            var += df * df;
            self.mean_far[i] = (one - a) * self.mean_far[i] + a * far_power[i];
            self.mean_res[i] = (one - a) * self.mean_res[i] + a * residual_power[i];
        }
        self.cov = (one - a) * self.cov + a * cov;
        self.var = (one - a) * self.var + a * var;
        self.far_sum = (one - a) * self.far_sum + a * far;
        self.res_sum = (one - a) * self.res_sum + a * sum(residual_power);

        let slope = if self.var > T::zero() {
            (self.cov / self.var).max(T::zero())
        } else {
            T::zero()
        };
        self.leakage = if self.res_sum > T::zero() {
            (slope * self.far_sum / self.res_sum).min(one)
        } else {
            T::zero()
        };
        self.mu = self.leakage.min(self.mu_max);
        self.mu
    }
}
