use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use relaystab_core::optimizer::split_indefinite;

proptest! {
    #[test]
    fn parts_reconstruct_and_have_signs(entries in prop::collection::vec(-5.0f64..5.0, 36)) {
        let raw = DMatrix::from_vec(6, 6, entries);
        let a = (&raw + raw.transpose()) * 0.5;
        let (pos, neg) = split_indefinite(&a).unwrap();
        prop_assert!((&pos + &neg - &a).amax() <= 1e-10);
        let scale = a.amax().max(1.0);
        prop_assert!(SymmetricEigen::new(pos).eigenvalues.min() >= -1e-10 * scale);
        prop_assert!(SymmetricEigen::new(neg).eigenvalues.max() <= 1e-10 * scale);
    }
}

#[test]
fn asymmetric_is_rejected() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    assert!(split_indefinite(&a).is_err());
}
