use num_complex::Complex64;

use super::SampledField;
use crate::error::Result;
use crate::spectral::Spectral;

fn spectra(f: &SampledField, sp: &Spectral) -> Vec<Vec<Complex64>> {
    (0..f.components).map(|c| sp.forward(f.component(c))).collect()
}

/// Max-norm of the spectrally computed divergence of a periodic vector field.
pub fn spectral_divergence_max(f: &SampledField) -> Result<f64> {
    f.require_vector()?;
    f.require_periodic()?;
    let sp = Spectral::for_grid(&f.grid);
    let hats = spectra(f, &sp);
    let div: Vec<Complex64> = (0..f.len())
        .map(|idx| {
            let k = sp.deriv_wavevector(idx);
            (0..f.components)
                .map(|c| hats[c][idx] * Complex64::new(0.0, k[c]))
                .sum()
        })
        .collect();
    Ok(sp.inverse_real(div).into_iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Spectral Leray projection: removes the gradient part mode by mode.
pub fn project_divfree(f: &SampledField) -> Result<SampledField> {
    f.require_vector()?;
    f.require_periodic()?;
    let sp = Spectral::for_grid(&f.grid);
    let mut hats = spectra(f, &sp);
    for idx in 0..f.len() {
        let k = sp.deriv_wavevector(idx);
        let k2: f64 = k.iter().take(f.components).map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        let kdotu: Complex64 = (0..f.components).map(|c| hats[c][idx] * k[c]).sum();
        for c in 0..f.components {
            hats[c][idx] -= kdotu * (k[c] / k2);
        }
    }
    let mut values = Vec::with_capacity(f.values.len());
    for h in hats {
        values.extend(sp.inverse_real(h));
    }
    let mut out = SampledField::new(f.grid.clone(), f.components, values)?;
    out.divergence_free = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::fields::Grid;

    #[test]
    fn scalar_input_is_arity_error() {
        let g = Grid::periodic(2, 8).unwrap();
        let f = SampledField::zeros(g, 1);
        assert!(matches!(project_divfree(&f), Err(Error::Arity(_))));
    }

    #[test]
    fn gradient_annihilated() {
        let g = Grid::periodic(2, 32).unwrap();
        // u = ∇(sin x cos 2y)
        let u = SampledField::from_fn(g, 2, |x, c| {
            if c == 0 {
                x[0].cos() * (2.0 * x[1]).cos()
            } else {
                -2.0 * x[0].sin() * (2.0 * x[1]).sin()
            }
        })
        .unwrap();
        let p = project_divfree(&u).unwrap();
        assert!(p.max_abs() <= 1e-12 * u.max_abs());
    }
}
