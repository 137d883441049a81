//! Receptive-field arithmetic compared with hand composition, and the
//! refinement-stage comparison the decoder design rests on.

use proptest::prelude::*;
use rfbtd_core::rf::{
    compute_block_profile, compute_rf_profile, plans, render_rf_map, support, LayerSpec,
};

/// Direct reading of the composition law, one axis at a time.
fn by_hand(layers: &[(usize, usize, usize)]) -> (usize, usize) {
    let (mut size, mut jump) = (1, 1);
    for &(k, s, d) in layers {
        size += (k + (k - 1) * (d - 1) - 1) * jump;
        jump *= s;
    }
    (size, jump)
}

proptest! {
    #[test]
    fn composition_law_is_exact(layers in prop::collection::vec((1usize..8, 1usize..4, 1usize..6), 1..8)) {
        let specs: Vec<LayerSpec> = layers.iter().map(|&(k, s, d)| LayerSpec::square(k, s, d)).collect();
        let p = compute_rf_profile(&specs).unwrap();
        prop_assert_eq!((p.size, p.jump), by_hand(&layers));
    }
}

#[test]
fn dilation_five_branch_reaches_thirteen() {
    let p = compute_rf_profile(&[LayerSpec::square(3, 1, 1), LayerSpec::square(3, 1, 5)]).unwrap();
    assert_eq!(p.size, 13);
    assert_eq!(by_hand(&[(3, 1, 1), (3, 1, 5)]), (13, 1));
}

#[test]
fn rfb_s_stage_sees_further_than_the_plain_stage() {
    let rfb_s = compute_block_profile(&plans::rfb_s()).unwrap();
    let plain = compute_rf_profile(&plans::plain_refinement()).unwrap();
    assert_eq!(plain.max_radius(), 5);
    assert_eq!(rfb_s.max_radius(), 13);
    assert!(rfb_s.max_radius() > plain.max_radius());
    assert!(rfb_s.radii.len() > 1, "single radius: {:?}", rfb_s.radii);
    // Both stages sit at the same decoder position, so the jump agrees.
    assert_eq!(rfb_s.jump, plain.jump);
}

#[test]
fn rendered_rfb_footprint_is_wider() {
    let rfb_s = compute_block_profile(&plans::rfb_s()).unwrap();
    let plain = compute_rf_profile(&plans::plain_refinement()).unwrap();
    let a = support(&render_rf_map(&rfb_s, 64, 64));
    let b = support(&render_rf_map(&plain, 64, 64));
    assert_eq!(b, 25);
    assert!(a > b, "{a} vs {b}");
}
