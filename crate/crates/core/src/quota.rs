/// Hamilton (largest remainder) apportionment of `total` units across
/// `shares`, which need not be normalized.
///
/// Every allocation differs from its exact proportional share by less than
/// one unit. Equal remainders go to the lower index.
pub fn largest_remainder(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    if shares.is_empty() || sum <= 0.0 {
        return vec![0; shares.len()];
    }
    let exact: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_eighty_ten_ten() {
        assert_eq!(largest_remainder(90, &[0.8, 0.1, 0.1]), vec![72, 9, 9]);
        assert_eq!(largest_remainder(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(largest_remainder(7, &[1.0, 1.0, 1.0]), vec![3, 2, 2]);
    }

    proptest! {
        #[test]
        fn within_one_unit_of_exact(total in 0usize..500, shares in proptest::collection::vec(0.01f64..10.0, 1..6)) {
            let alloc = largest_remainder(total, &shares);
            let sum: f64 = shares.iter().sum();
            prop_assert_eq!(alloc.iter().sum::<usize>(), total);
            for (a, s) in alloc.iter().zip(&shares) {
                prop_assert!((*a as f64 - total as f64 * s / sum).abs() < 1.0);
            }
        }
    }
}
