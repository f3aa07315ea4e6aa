mod common;

use gridcert::certificates::{max_droop_search, popov_check, PopovOptions};

#[test]
fn droop_bound_per_sigma() {
    let model = common::four_area(13.0);
    let opts = PopovOptions::default();
    let mut previous = f64::INFINITY;
    for (sigma1, expected) in [(0.0, 24.3), (5.0, 20.0), (10.0, 16.9), (15.0, 15.2), (20.0, 14.3), (30.0, 13.9)] {
        let sigma = common::table2_sigma(&model, sigma1);
        let s = max_droop_search(&model, 0, &sigma, (1.0, 60.0), 0.05, &opts).unwrap();
        println!("sigma1 = {sigma1}: k_max = {} (table {expected})", s.k_max);
        assert!((s.k_max - expected).abs() <= 0.05 * expected);
        assert!(s.k_max <= previous);
        previous = s.k_max;
    }
}

#[test]
fn table_row_endpoints() {
    let opts = PopovOptions::default();
    let pass = common::four_area(14.3);
    assert!(popov_check(&pass, &common::table2_sigma(&pass, 20.0), &opts).unwrap().pass);
    let fail = common::four_area(15.5);
    assert!(!popov_check(&fail, &common::table2_sigma(&fail, 20.0), &opts).unwrap().pass);
}
