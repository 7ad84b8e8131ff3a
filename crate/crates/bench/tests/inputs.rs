use chanest_bench::gaussian;

#[test]
fn inputs_are_seeded_and_distinct() {
    let a = gaussian(8, 4, 1);
    assert_eq!(a.dims(), (8, 4));
    assert_eq!(a, gaussian(8, 4, 1));
    assert_ne!(a, gaussian(8, 4, 2));
    let power = a.frobenius_norm_sqr() / 32.0;
    assert!(power > 0.3 && power < 3.0, "{power}");
}
