use super::DeviceError;

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean((i+1)..=(j+1))
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with mid-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, DeviceError> {
    if x.len() != y.len() {
        return Err(DeviceError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(DeviceError::TooShort(x.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(DeviceError::ConstantInput);
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15, "{r}");
    }

    #[test]
    fn ties_get_mid_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(spearman(&[1.0, 2.0], &[1.0]), Err(DeviceError::LengthMismatch(2, 1)));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(DeviceError::ConstantInput));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(DeviceError::TooShort(1)));
    }

    proptest::proptest! {
        #[test]
        fn invariant_under_increasing_maps(v in proptest::collection::vec(-5.0f64..5.0, 3..40), w in proptest::collection::vec(-5.0f64..5.0, 40)) {
            let y = &w[..v.len()];
            if let Ok(r) = spearman(&v, y) {
                let ex: Vec<f64> = v.iter().map(|a| a.exp()).collect();
                let af: Vec<f64> = y.iter().map(|a| 3.0 * a + 7.0).collect();
                proptest::prop_assert_eq!(r, spearman(&ex, y).unwrap());
                proptest::prop_assert_eq!(r, spearman(&v, &af).unwrap());
                proptest::prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
