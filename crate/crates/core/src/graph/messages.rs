//! Binary messages in log space and the closed-form OR-factor updates.
//!
//! A message is a pair `[ln m(0), ln m(1)]` normalized so its larger entry
//! is 0. Exactly one entry may be `-inf` when the message is deterministic.

/// Normalized log-space message over a binary variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMsg(pub [f64; 2]);

impl LogMsg {
    pub const UNIFORM: LogMsg = LogMsg([0.0, 0.0]);
    /// Certainly 0.
    pub const NEGATIVE: LogMsg = LogMsg([0.0, f64::NEG_INFINITY]);
    /// Certainly 1.
    pub const POSITIVE: LogMsg = LogMsg([f64::NEG_INFINITY, 0.0]);

    /// Normalizes an arbitrary log vector. Returns `None` when both entries
    /// are `-inf` (contradictory inputs).
    #[inline]
    pub fn normalize(v: [f64; 2]) -> Option<LogMsg> {
        let m = v[0].max(v[1]);
        if m == f64::NEG_INFINITY || m.is_nan() {
            return None;
        }
        Some(LogMsg([v[0] - m, v[1] - m]))
    }

    /// Normalizes, substituting the uniform message on contradiction.
    #[inline]
    pub fn normalize_or_uniform(v: [f64; 2], contradiction: &mut bool) -> LogMsg {
        Self::normalize(v).unwrap_or_else(|| {
            *contradiction = true;
            LogMsg::UNIFORM
        })
    }

    /// From linear-domain probabilities (need not sum to 1).
    pub fn from_probs(p0: f64, p1: f64) -> Option<LogMsg> {
        Self::normalize([ln(p0), ln(p1)])
    }

    /// `ln` of the probability of 0 after normalizing to sum 1.
    #[inline]
    pub fn ln_prob0(&self) -> f64 {
        let [a, b] = self.0;
        a - (a.min(b)).exp().ln_1p()
    }

    /// `ln` of the probability of 1 after normalizing to sum 1.
    #[inline]
    pub fn ln_prob1(&self) -> f64 {
        let [a, b] = self.0;
        b - (a.min(b)).exp().ln_1p()
    }

    /// Linear-domain `(p0, p1)` summing to 1.
    pub fn probs(&self) -> [f64; 2] {
        let p1 = self.prob1();
        [1.0 - p1, p1]
    }

    #[inline]
    pub fn prob1(&self) -> f64 {
        let [a, b] = self.0;
        if b >= a {
            1.0 / (1.0 + a.exp())
        } else {
            let r = b.exp();
            r / (1.0 + r)
        }
    }

    #[inline]
    pub fn add(&self, other: &LogMsg) -> [f64; 2] {
        [self.0[0] + other.0[0], self.0[1] + other.0[1]]
    }

    pub fn is_valid(&self) -> bool {
        let [a, b] = self.0;
        !a.is_nan() && !b.is_nan() && a <= 0.0 && b <= 0.0 && (a == 0.0 || b == 0.0)
    }
}

#[inline]
fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln(1 - e^x)` for `x <= 0`, accurate near both ends.
#[inline]
pub fn ln_1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)` with `-inf` handled.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// OR-factor message to the physician variable given the sum `ln_p0` of
/// `ln mu_k(0)` over all linked patients: `(P0, 1 - P0)`.
#[inline]
pub fn or_to_physician_from_ln_p0(ln_p0: f64) -> LogMsg {
    LogMsg::normalize([ln_p0, ln_1m_exp(ln_p0)]).expect("P0 and 1 - P0 cannot both vanish")
}

/// OR-factor message to the physician from the linked patients' messages.
///
/// # Panics
/// If `incoming` is empty; every physician has at least one patient.
pub fn or_to_physician(incoming: &[LogMsg]) -> LogMsg {
    assert!(!incoming.is_empty(), "OR factor needs at least one patient");
    or_to_physician_from_ln_p0(incoming.iter().map(LogMsg::ln_prob0).sum())
}

/// OR-factor message to one patient given the physician-side message and
/// `ln_p0_excl`, the sum of `ln mu_k(0)` over the other linked patients.
/// `None` on contradiction.
#[inline]
pub fn or_to_patient_from_ln_p0(physician: &LogMsg, ln_p0_excl: f64) -> Option<LogMsg> {
    let [a0, a1] = physician.0;
    let m1 = a1;
    let m0 = log_add_exp(a1 + ln_1m_exp(ln_p0_excl), a0 + ln_p0_excl);
    LogMsg::normalize([m0, m1])
}

/// OR-factor message to one patient from the physician-side message and the
/// messages of the other linked patients. Returns the uniform message if the
/// inputs are contradictory.
pub fn or_to_patient(physician: &LogMsg, others: &[LogMsg]) -> LogMsg {
    let ln_p0: f64 = others.iter().map(LogMsg::ln_prob0).sum();
    or_to_patient_from_ln_p0(physician, ln_p0).unwrap_or(LogMsg::UNIFORM)
}
