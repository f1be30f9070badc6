//! Front-to-back alpha compositing and alpha normalization.

/// Running front-to-back accumulation `C = Σ cᵢ αᵢ Tᵢ`, `α = Σ αᵢ Tᵢ` with
/// `Tᵢ = Π_{j<i} (1 - αⱼ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compositor {
    pub color: [f64; 3],
    pub alpha: f64,
    /// `Σ dᵢ αᵢ Tᵢ`.
    pub depth: f64,
    pub transmittance: f64,
    pub fragments: usize,
}

impl Default for Compositor {
    fn default() -> Self {
        Self {
            color: [0.0; 3],
            alpha: 0.0,
            depth: 0.0,
            transmittance: 1.0,
            fragments: 0,
        }
    }
}

impl Compositor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Blends one fragment behind everything added so far.
    #[inline]
    pub fn add(&mut self, color: [f64; 3], alpha: f64, depth: f64) {
        let w = alpha * self.transmittance;
        for (acc, c) in self.color.iter_mut().zip(color) {
            *acc += c * w;
        }
        self.alpha += w;
        self.depth += depth * w;
        self.transmittance *= 1.0 - alpha;
        self.fragments += 1;
    }
}

/// Composites depth-ordered fragments. Stops once transmittance falls below
/// `transmittance_floor` (pass `0.0` to consume every fragment).
pub fn composite(
    colors: &[[f64; 3]],
    opacities: &[f64],
    depths: &[f64],
    transmittance_floor: f64,
) -> Compositor {
    let mut acc = Compositor::new();
    for ((c, a), d) in colors.iter().zip(opacities).zip(depths) {
        acc.add(*c, *a, *d);
        if acc.transmittance < transmittance_floor {
            break;
        }
    }
    acc
}

/// Divides the composited color by alpha when `alpha ≥ tau_alpha`, otherwise
/// composites over `background`. Clamped to `[0, 1]`.
pub fn normalize_color(
    raw: [f64; 3],
    alpha: f64,
    tau_alpha: f64,
    background: [f64; 3],
) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let v = if alpha >= tau_alpha {
            raw[k] / alpha
        } else {
            raw[k] + (1.0 - alpha) * background[k]
        };
        out[k] = v.clamp(0.0, 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const C1: [f64; 3] = [0.9, 0.2, 0.1];
    const C2: [f64; 3] = [0.1, 0.5, 0.8];

    #[test]
    fn single_fragment() {
        let acc = composite(&[C1], &[0.6], &[2.0], 0.0);
        for (got, c) in acc.color.iter().zip(C1) {
            assert!((got - 0.6 * c).abs() < 1e-15);
        }
        assert_eq!(acc.alpha, 0.6);
        let out = normalize_color(acc.color, acc.alpha, 0.001, [0.0; 3]);
        for k in 0..3 {
            assert!((out[k] - C1[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn two_fragments() {
        let acc = composite(&[C1, C2], &[0.6, 0.6], &[1.0, 2.0], 0.0);
        assert!((acc.alpha - 0.84).abs() < 1e-15);
        let out = normalize_color(acc.color, acc.alpha, 0.001, [0.0; 3]);
        for k in 0..3 {
            let raw = 0.6 * C1[k] + 0.24 * C2[k];
            assert!((acc.color[k] - raw).abs() < 1e-15);
            assert!((out[k] - raw / 0.84).abs() < 1e-15);
        }
    }

    #[test]
    fn empty() {
        let acc = composite(&[], &[], &[], 1e-4);
        assert_eq!(acc.color, [0.0; 3]);
        assert_eq!(acc.alpha, 0.0);
        assert_eq!(acc.transmittance, 1.0);
    }

    #[test]
    fn below_threshold_keeps_raw_color() {
        let raw = [0.0004, 0.0001, 0.0];
        assert_eq!(normalize_color(raw, 0.0005, 0.001, [0.0; 3]), raw);
        let over_white = normalize_color(raw, 0.0005, 0.001, [1.0; 3]);
        assert!((over_white[0] - (0.0004 + 0.9995)).abs() < 1e-15);
    }

    #[test]
    fn early_termination() {
        let colors = vec![C1; 20];
        let opacities = vec![0.6; 20];
        let depths = vec![1.0; 20];
        let acc = composite(&colors, &opacities, &depths, 1e-4);
        assert!(acc.fragments < 20);
        assert!(acc.transmittance < 1e-4);
        let full = composite(&colors, &opacities, &depths, 0.0);
        assert_eq!(full.fragments, 20);
        assert!((full.alpha - acc.alpha).abs() < 1e-4);
    }
}
