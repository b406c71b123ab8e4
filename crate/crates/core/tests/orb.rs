mod common;

use std::collections::HashMap;

use dfvio::imgproc::gaussian_blur5;
use dfvio::orb::pattern::ORB_PATTERN;
use dfvio::orb::{
    describe, fast_candidates, fast_detect, match_hamming, orientation, rotate_offset, to_q7_8, Corner, Descriptor256,
    OrbFeature, EDGE_MARGIN, MAX_HAMMING,
};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn corner(x: u32, y: u32) -> Corner {
    Corner {
        x,
        y,
        fast_score: 0,
        harris_score: 0,
    }
}

#[test]
fn detector_keeps_the_window_maxima_of_the_oracle() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let img = blocky_image(&mut rng, 64, 64);
        let t = rng.random_range(10..60u8);
        let cand = fast_oracle(&img, t, EDGE_MARGIN);
        // raster order breaks ties, so a corner survives when no neighbour
        // scores higher and no earlier neighbour scores the same
        let mut want: Vec<(u32, u32)> = cand
            .iter()
            .filter(|(&(x, y), &s)| {
                (-1i32..=1).all(|dy| {
                    (-1i32..=1).all(|dx| {
                        let key = ((x as i32 + dx) as u32, (y as i32 + dy) as u32);
                        let earlier = (dy, dx) < (0, 0);
                        match cand.get(&key) {
                            Some(&o) if (dx, dy) != (0, 0) => o < s || (o == s && !earlier),
                            _ => true,
                        }
                    })
                })
            })
            .map(|(&(x, y), _)| (y, x))
            .collect();
        want.sort_unstable();
        let mut got: Vec<(u32, u32)> = fast_detect(&img, t).unwrap().iter().map(|c| (c.y, c.x)).collect();
        got.sort_unstable();
        assert_eq!(got, want, "threshold {t}");
    }
}

#[test]
fn candidates_on_flat_and_tiny_frames() {
    let flat = dfvio::Image8::filled(40, 40, 90);
    assert!(fast_candidates(&flat, 10, 3).is_empty());
    let tiny = dfvio::Image8::filled(6, 6, 0);
    assert!(fast_candidates(&tiny, 10, 3).is_empty());
    assert!(fast_detect(&tiny, 10).is_err());
}

#[test]
fn pattern_matches_fixture() {
    let text = include_str!("fixtures/orb_pattern.txt");
    let rows: Vec<[i8; 4]> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<i8> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3]]
        })
        .collect();
    assert_eq!(rows.len(), 256);
    assert_eq!(rows.as_slice(), &ORB_PATTERN[..]);
}

#[test]
fn steered_offsets_stay_within_a_pixel_of_exact_rotation() {
    for deg in (-180..180).step_by(3) {
        let a = (deg as f64).to_radians();
        let (c, s) = (to_q7_8(a.cos()), to_q7_8(a.sin()));
        for p in ORB_PATTERN.iter() {
            for (x, y) in [(p[0] as f64, p[1] as f64), (p[2] as f64, p[3] as f64)] {
                let (rx, ry) = rotate_offset(x as i32, y as i32, c, s);
                let ex = x * a.cos() - y * a.sin();
                let ey = x * a.sin() + y * a.cos();
                assert!((rx as f64 - ex).abs() <= 1.0 && (ry as f64 - ey).abs() <= 1.0, "{deg} deg: ({x}, {y})");
            }
        }
    }
}

/// Descriptor computed with exact floating-point rotation and rounding.
fn describe_oracle(blurred: &dfvio::Image8, x: u32, y: u32, angle: f64) -> Descriptor256 {
    let (s, c) = angle.sin_cos();
    let at = |px: i8, py: i8| {
        let (px, py) = (px as f64, py as f64);
        let u = (c * px - s * py).round() as i64 + x as i64;
        let v = (s * px + c * py).round() as i64 + y as i64;
        blurred.get(u as usize, v as usize)
    };
    let mut d = Descriptor256::default();
    for (k, p) in ORB_PATTERN.iter().enumerate() {
        if at(p[0], p[1]) < at(p[2], p[3]) {
            d.set_bit(k);
        }
    }
    d
}

#[test]
fn fixed_point_descriptor_tracks_the_float_oracle() {
    let mut rng = rng(17);
    let mut distances = Vec::new();
    for _ in 0..40 {
        let field = WaveField::new(&mut rng, 30, 5.0, 20.0);
        let img = gaussian_blur5(&field.render(96, 96, 0.0, 0.0)).unwrap();
        let a = rng.random_range(-3.1..3.1);
        let got = describe(&img, &corner(48, 48), a);
        distances.push(got.hamming(&describe_oracle(&img, 48, 48, a)));
    }
    let mean = distances.iter().sum::<u32>() as f64 / distances.len() as f64;
    // Q7.8 rounding moves a handful of samples by one pixel
    assert!(mean <= 3.0, "mean distance {mean}, all {distances:?}");
}

#[test]
fn describe_is_rotation_consistent() {
    let mut rng = rng(23);
    let (w, h) = (120usize, 120usize);
    let (cx, cy) = (60u32, 60u32);
    let mut within = 0;
    let mut total = 0;
    let mut worst = 0;
    for _ in 0..20 {
        let field = WaveField::new(&mut rng, 24, 8.0, 30.0);
        let base = gaussian_blur5(&field.render(w, h, 0.0, 0.0)).unwrap();
        let theta = orientation(&base, &corner(cx, cy)).angle;
        let d0 = describe(&base, &corner(cx, cy), theta);
        for deg in (-30..=30).step_by(5) {
            let delta = (deg as f64).to_radians();
            let rotated = gaussian_blur5(&field.render_rotated(w, h, cx as f64, cy as f64, delta)).unwrap();
            let d1 = describe(&rotated, &corner(cx, cy), theta + delta);
            let dist = d0.hamming(&d1);
            worst = worst.max(dist);
            total += 1;
            if dist <= MAX_HAMMING {
                within += 1;
            }
        }
    }
    assert!(within as f64 >= 0.9 * total as f64, "{within}/{total} within {MAX_HAMMING}, worst {worst}");
}

#[test]
fn measured_orientation_follows_the_rotation() {
    let mut rng = rng(29);
    let field = WaveField::new(&mut rng, 3, 40.0, 60.0);
    let base = gaussian_blur5(&field.render(100, 100, 0.0, 0.0)).unwrap();
    let theta = orientation(&base, &corner(50, 50)).angle;
    let rotated = gaussian_blur5(&field.render_rotated(100, 100, 50.0, 50.0, 0.4)).unwrap();
    let theta2 = orientation(&rotated, &corner(50, 50)).angle;
    let diff = dfvio::fusion::wrap_angle(theta2 - theta - 0.4);
    assert!(diff.abs() < 0.05, "orientation moved by {} instead of 0.4", theta2 - theta);
}

fn feature(rng: &mut impl Rng, x: u32, y: u32) -> OrbFeature {
    OrbFeature {
        x,
        y,
        angle: 0.0,
        descriptor: Descriptor256([rng.random(), rng.random(), rng.random(), rng.random()]),
    }
}

fn flip_bits(d: Descriptor256, bits: &[usize]) -> Descriptor256 {
    let mut out = d;
    for &b in bits {
        out.0[b / 64] ^= 1 << (b % 64);
    }
    out
}

#[test]
fn matching_respects_the_hamming_limit() {
    let mut rng = rng(31);
    let prev: Vec<OrbFeature> = (0..30).map(|i| feature(&mut rng, 20 + i * 3, 40)).collect();
    let cur: Vec<OrbFeature> = prev
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let flips: Vec<usize> = (0..(i % 30)).map(|k| k * 8).collect();
            OrbFeature {
                x: p.x + 2,
                y: p.y + 1,
                descriptor: flip_bits(p.descriptor, &flips),
                ..*p
            }
        })
        .collect();
    let matches = match_hamming(&prev, &cur, (80.0, 60.0));
    assert_eq!(matches.len(), MAX_HAMMING as usize + 1);
    for m in &matches {
        assert_eq!(m.displacement(), (2.0, 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn match_set_ignores_input_order(seed in any::<u64>(), n in 2usize..25, shuffle in any::<u64>()) {
        let mut rng = rng(seed);
        let prev: Vec<OrbFeature> = (0..n).map(|i| feature(&mut rng, 20 + i as u32 * 4, 30 + (i as u32 * 7) % 50)).collect();
        let mut cur: Vec<OrbFeature> = prev
            .iter()
            .map(|p| OrbFeature {
                x: p.x + 1,
                descriptor: flip_bits(p.descriptor, &[rng.random_range(0..256), rng.random_range(0..256)]),
                ..*p
            })
            .collect();
        cur.extend((0..n / 2).map(|i| feature(&mut rng, 100 + i as u32, 90)));
        let key = |m: &dfvio::TrackedMatch| (m.px.to_bits(), m.py.to_bits(), m.cx.to_bits(), m.cy.to_bits());
        let mut want: Vec<_> = match_hamming(&prev, &cur, (80.0, 60.0)).iter().map(key).collect();
        want.sort_unstable();

        let mut srng = common::rng(shuffle);
        let mut p2 = prev.clone();
        let mut c2 = cur.clone();
        for v in [&mut p2, &mut c2] {
            for i in (1..v.len()).rev() {
                v.swap(i, srng.random_range(0..=i));
            }
        }
        let mut got: Vec<_> = match_hamming(&p2, &c2, (80.0, 60.0)).iter().map(key).collect();
        got.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn fast_candidates_equal_oracle(seed in any::<u64>(), t in 1u8..100, w in 8usize..40, h in 8usize..40) {
        let img = noise_image(&mut rng(seed), w, h);
        let got: HashMap<(u32, u32), u16> = fast_candidates(&img, t, 3).into_iter().map(|c| ((c.x, c.y), c.fast_score)).collect();
        let want: HashMap<(u32, u32), u16> = fast_oracle(&img, t, 3).into_iter().collect();
        prop_assert_eq!(got, want);
    }
}
