/// Hypergradient density value and its derivative with respect to the
/// highest deformation gradient (same layout as the input).
#[derive(Clone, Debug, PartialEq)]
pub struct HyperEval {
    pub value: f64,
    pub derivative: Vec<f64>,
}

/// Dynamic 3rd-grade term `(h₀/2) Σ (∂³y)²`, i.e. ℍ = h₀·𝕀.
pub fn hypergradient_dynamic(third: &[f64], h0: f64) -> HyperEval {
    let value = 0.5 * h0 * third.iter().map(|t| t * t).sum::<f64>();
    HyperEval {
        value,
        derivative: third.iter().map(|t| h0 * t).collect(),
    }
}

/// Static 2nd-grade term `(h₀/p)|∇²y|^p`.
pub fn hypergradient_static(second: &[f64], h0: f64, p: f64) -> HyperEval {
    let norm2: f64 = second.iter().map(|t| t * t).sum();
    if norm2 == 0.0 {
        return HyperEval {
            value: 0.0,
            derivative: vec![0.0; second.len()],
        };
    }
    let norm = norm2.sqrt();
    let scale = h0 * norm.powf(p - 2.0);
    HyperEval {
        value: h0 / p * norm.powf(p),
        derivative: second.iter().map(|t| scale * t).collect(),
    }
}
