use super::*;
use crate::rng::Rng;
use crate::shapes::{generate_asset, half_mask, FamilyKind, RegionMask, ShapeFamily};
use proptest::prelude::*;

fn cloud(points: &[[f64; 3]]) -> PointCloud {
    PointCloud::new(points.to_vec())
}

#[test]
fn chamfer_examples() {
    let a = cloud(&[[0.0, 0.0, 0.0]]);
    let b = cloud(&[[0.01, 0.0, 0.0]]);
    assert!((chamfer_l1(&a, &b).unwrap() - 0.01).abs() < 1e-15);
    assert!((100.0 * chamfer_l1(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(chamfer_l1(&a, &a).unwrap(), 0.0);
    assert!(matches!(chamfer_l1(&a, &cloud(&[])), Err(Error::EmptyInput(_))));

    let mut rng = Rng::new(1);
    let p: Vec<[f64; 3]> = (0..40).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
    let q: Vec<[f64; 3]> = (0..25).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
    assert_eq!(chamfer_l1(&cloud(&p), &cloud(&q)).unwrap(), chamfer_l1(&cloud(&q), &cloud(&p)).unwrap());
}

#[test]
fn fscore_examples() {
    let a = cloud(&[[0.0, 0.0, 0.0]]);
    let b = cloud(&[[0.01, 0.0, 0.0]]);
    assert_eq!(fscore(&a, &b, 0.01).unwrap(), (1.0, 1.0, 1.0));
    assert_eq!(fscore(&a, &a, 0.01).unwrap(), (1.0, 1.0, 1.0));
    let far = cloud(&[[0.5, 0.5, 0.5]]);
    assert_eq!(fscore(&a, &far, 0.02).unwrap(), (0.0, 0.0, 0.0));
    assert!(fscore(&a, &b, 0.0).is_err());
}

#[test]
fn iou_dice_examples() {
    let set = |ids: &[usize]| {
        let mut v = vec![false; 8];
        for &i in ids {
            v[i] = true;
        }
        v
    };
    let (iou, dice) = iou_dice(&set(&[1, 2, 3, 4]), &set(&[3, 4, 5, 6])).unwrap();
    assert!((iou - 2.0 / 6.0).abs() < 1e-15);
    assert_eq!(dice, 0.5);
    assert_eq!(iou_dice(&set(&[1, 2]), &set(&[1, 2])).unwrap(), (1.0, 1.0));
    assert_eq!(iou_dice(&set(&[1, 2]), &set(&[5])).unwrap(), (0.0, 0.0));
    assert!(matches!(iou_dice(&set(&[]), &set(&[])), Err(Error::EmptyInput(_))));
    assert!(iou_dice(&[true], &[true, false]).is_err());
}

fn slab() -> VoxelAsset {
    let n = 8;
    let mut pos = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..3 {
                pos.push([x, y, z]);
            }
        }
    }
    let colors = vec![[0.25, 0.5, 0.75]; pos.len()];
    VoxelAsset::from_voxels(n, &pos, &colors, 0).unwrap()
}

#[test]
fn slab_renders() {
    let a = slab();
    let depth = render_ortho(&a, Axis::Z, RenderKind::Depth);
    // The top layer z = 2 is reached after 5 empty layers.
    assert!(depth.data.iter().all(|&d| (d - (1.0 - 5.0 / 8.0)).abs() < 1e-15));
    let normal = render_ortho(&a, Axis::Z, RenderKind::Normal);
    for px in normal.data.chunks(3) {
        assert!((px[0] - 0.5).abs() < 1e-12 && (px[1] - 0.5).abs() < 1e-12 && (px[2] - 1.0).abs() < 1e-12, "{px:?}");
    }
    let app = render_ortho(&a, Axis::Z, RenderKind::Appearance);
    assert!(app.data.chunks(3).all(|px| px == [0.25, 0.5, 0.75]));
    assert_eq!(render_ortho(&a, Axis::Z, RenderKind::Normal), normal);
}

#[test]
fn empty_asset_renders_black() {
    let a = VoxelAsset::from_voxels(8, &[], &[], 0).unwrap();
    for axis in Axis::ALL {
        for kind in RenderKind::ALL {
            assert!(render_ortho(&a, axis, kind).data.iter().all(|&v| v == 0.0));
        }
    }
}

fn ramp(w: usize, h: usize, c: usize, offset: f64) -> RenderImage {
    let data = (0..w * h * c).map(|i| 0.2 + 0.5 * (i % 17) as f64 / 17.0 + offset).collect();
    RenderImage::new(w, h, c, data).unwrap()
}

#[test]
fn psnr_ssim_examples() {
    let a = ramp(16, 16, 3, 0.0);
    let b = ramp(16, 16, 3, 0.1);
    assert_eq!(psnr(&a, &a).unwrap(), 99.0);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    assert!(psnr(&a, &ramp(16, 8, 3, 0.0)).is_err());

    let mut rng = Rng::new(5);
    let n1 = RenderImage::new(12, 12, 1, (0..144).map(|_| rng.uniform()).collect()).unwrap();
    let n2 = RenderImage::new(12, 12, 1, (0..144).map(|_| rng.uniform()).collect()).unwrap();
    let s = ssim(&n1, &n2).unwrap();
    assert!((-1.0..=1.0).contains(&s));
    assert!(psnr(&n1, &n2).unwrap() >= 0.0);
}

/// Independent SSIM oracle: per-window statistics from explicit lists.
#[test]
fn ssim_matches_window_oracle() {
    let mut rng = Rng::new(6);
    let a = RenderImage::new(9, 8, 2, (0..144).map(|_| rng.uniform()).collect()).unwrap();
    let b = RenderImage::new(9, 8, 2, (0..144).map(|_| rng.uniform()).collect()).unwrap();
    let mut vals = Vec::new();
    for ch in 0..2 {
        for r0 in 0..2 {
            for c0 in 0..3 {
                let xs: Vec<f64> = (0..49).map(|i| a.get(r0 + i / 7, c0 + i % 7, ch)).collect();
                let ys: Vec<f64> = (0..49).map(|i| b.get(r0 + i / 7, c0 + i % 7, ch)).collect();
                let m = |v: &[f64]| v.iter().sum::<f64>() / 49.0;
                let (mx, my) = (m(&xs), m(&ys));
                let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / 49.0;
                let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / 49.0;
                let cxy = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / 49.0;
                let (c1, c2) = (1e-4, 9e-4);
                vals.push((2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
            }
        }
    }
    let oracle = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!((ssim(&a, &b).unwrap() - oracle).abs() < 1e-12);
}

fn random_cloud(rng: &mut Rng, n: usize, lattice: bool) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            if lattice {
                let c = |r: &mut Rng| (r.below(16) as f64 + 0.5) / 16.0;
                [c(rng), c(rng), c(rng)]
            } else {
                [rng.uniform(), rng.uniform(), rng.uniform() * 0.2]
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn hash_equals_brute_force(seed in 0u64..10_000, na in 1usize..500, nb in 1usize..500, lattice in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let a = random_cloud(&mut rng, na, lattice);
        let b = random_cloud(&mut rng, nb, lattice);
        for norm in [Norm::L1, Norm::L2] {
            let fast = nearest_distances(&a, &b, norm);
            let slow = nearest_distances_brute(&a, &b, norm);
            prop_assert!(fast.iter().zip(&slow).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn metrics_invariant_under_permutation(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let a = random_cloud(&mut rng, 60, true);
        let b = random_cloud(&mut rng, 45, true);
        let mut pa = a.clone();
        let mut pb = b.clone();
        pa.reverse();
        pb.rotate_left(7);
        let (ca, cb, cpa, cpb) = (cloud(&a), cloud(&b), cloud(&pa), cloud(&pb));
        prop_assert!((chamfer_l1(&ca, &cb).unwrap() - chamfer_l1(&cpa, &cpb).unwrap()).abs() < 1e-12);
        prop_assert_eq!(fscore(&ca, &cb, 0.1).unwrap(), fscore(&cpa, &cpb, 0.1).unwrap());
    }
}

/// Brute-force Chamfer on clouds of up to 500 points, exact equality.
#[test]
fn chamfer_production_equals_brute() {
    let mut rng = Rng::new(8);
    for n in [1, 7, 120, 500] {
        let a = random_cloud(&mut rng, n, true);
        let b = random_cloud(&mut rng, 500 - n + 1, false);
        let brute = |p: &[[f64; 3]], q: &[[f64; 3]]| {
            let d = nearest_distances_brute(p, q, Norm::L1);
            d.iter().sum::<f64>() / d.len() as f64
        };
        let oracle = 0.5 * (brute(&a, &b) + brute(&b, &a));
        assert_eq!(chamfer_l1(&cloud(&a), &cloud(&b)).unwrap().to_bits(), oracle.to_bits());
    }
}

fn fixture() -> (VoxelAsset, VoxelAsset, RegionMask) {
    let mut rng = Rng::new(3);
    let torus = ShapeFamily::sample(FamilyKind::Torus, &mut rng, 16);
    let gt = generate_asset(&mut rng, &torus).unwrap();
    let ellipsoid = ShapeFamily::sample(FamilyKind::Ellipsoid, &mut rng, 16);
    let other = generate_asset(&mut rng, &ellipsoid).unwrap();
    (gt, other, half_mask(16, 2, 0))
}

#[test]
fn perfect_result_scores_perfectly() {
    let (gt, _, mask) = fixture();
    let r = evaluate_inpaint(&gt, &gt, &mask).unwrap();
    assert_eq!((r.pres_iou, r.pres_dice, r.pres_cd_x100), (1.0, 1.0, 0.0));
    assert_eq!((r.pres_f001, r.pres_f002), (1.0, 1.0));
    assert_eq!((r.pres_psnr_normal, r.pres_psnr_appearance), (99.0, 99.0));
    assert!((r.pres_ssim_normal - 1.0).abs() < 1e-12 && (r.pres_ssim_appearance - 1.0).abs() < 1e-12);
    assert_eq!((r.inp_count_rel_diff, r.inp_color_hist_l1, r.inp_iou), (0.0, 0.0, 1.0));
}

#[test]
fn record_schema_matches_field_lists() {
    let (gt, other, mask) = fixture();
    let r = evaluate_inpaint(&other, &gt, &mask).unwrap();
    let v = serde_json::to_value(r).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    let mut expected: Vec<&str> = RECONSTRUCTION_FIELDS.iter().chain(GENERATION_FIELDS.iter()).copied().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    expected.sort();
    assert_eq!(sorted, expected);
    for (name, value) in RECONSTRUCTION_FIELDS.iter().zip(r.reconstruction_values()) {
        assert_eq!(v[name].as_f64().map(f64::to_bits), Some(value.to_bits()).filter(|_| value.is_finite()));
    }
}

#[test]
fn record_matches_manual_metrics() {
    let (gt, other, mask) = fixture();
    let r = evaluate_inpaint(&other, &gt, &mask).unwrap();
    let keep = mask.preserved();
    let (a, b) = (other.restricted(keep), gt.restricted(keep));
    let (iou, dice) = iou_dice(a.occupancy(), b.occupancy()).unwrap();
    assert_eq!((r.pres_iou, r.pres_dice), (iou, dice));
    let (pa, pb) = (PointCloud::from_asset(&a), PointCloud::from_asset(&b));
    assert_eq!(r.pres_cd_x100, 100.0 * chamfer_l1(&pa, &pb).unwrap());
    assert_eq!(r.pres_f002, fscore(&pa, &pb, 0.02).unwrap().2);
    let mut p = 0.0;
    for axis in Axis::ALL {
        p += psnr(&render_ortho(&a, axis, RenderKind::Normal), &render_ortho(&b, axis, RenderKind::Normal)).unwrap();
    }
    assert_eq!(r.pres_psnr_normal, p / 3.0);
    let inp = mask.inpaint();
    let count = |x: &VoxelAsset| x.occupancy().iter().zip(&inp).filter(|(o, i)| **o && **i).count() as f64;
    assert_eq!((r.inp_count, r.inp_count_gt), (count(&other), count(&gt)));
}
