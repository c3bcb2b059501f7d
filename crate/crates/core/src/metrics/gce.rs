use nalgebra::DMatrix;

use crate::error::{check_dims, Error, Result};
use crate::params::ParamVector;

/// Generalized coherence estimate `1 − det(Ĉ)`, where `Ĉ` is the Gram matrix
/// of the unit-normalized inputs. 0 for mutually orthogonal vectors, 1 when
/// any two are parallel.
pub fn gce(vectors: &[ParamVector]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::Degenerate(format!("gce needs at least 2 vectors, got {}", vectors.len())));
    }
    let dim = vectors[0].len();
    let mut norms = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        check_dims(dim, v.len())?;
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate(format!("vector {i} has norm {n}")));
        }
        norms.push(n);
    }
    let k = vectors.len();
    let mut gram = DMatrix::<f64>::identity(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let c = vectors[a].dot(&vectors[b])? / (norms[a] * norms[b]);
            gram[(a, b)] = c;
            gram[(b, a)] = c;
        }
    }
    Ok((1.0 - gram.determinant()).clamp(0.0, 1.0))
}
