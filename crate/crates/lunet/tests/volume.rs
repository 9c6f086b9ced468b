use lunet::synth::SyntheticSpec;
use lunet::volume::*;
use lunet::Error;
use proptest::prelude::*;

fn bits(v: &Volume) -> Vec<u32> {
    v.voxels.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn native_file_round_trip_64_cubed() {
    let dir = tempfile::tempdir().unwrap();
    let vol = SyntheticSpec { n_volumes: 1, ..Default::default() }.generate_one(0).unwrap().volume;
    assert_eq!(vol.dims, [64, 64, 64]);
    let path = dir.path().join("scan.luv");
    write_volume(&vol, &path, VolumeFormat::from_path(&path)).unwrap();
    let back = read_volume(&path, VolumeFormat::Native).unwrap();
    assert_eq!(bits(&back), bits(&vol));
    assert_eq!(back.dims, vol.dims);
    assert_eq!(back.intensity_range, vol.intensity_range);
}

#[test]
fn nifti_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vol = Volume::new([5, 6, 7], (0..210).map(|v| (v as f32).sin()).collect(), [2.0, 1.0, 0.5]).unwrap();
    let path = dir.path().join("scan.nii");
    assert_eq!(VolumeFormat::from_path(&path), VolumeFormat::Nifti1);
    write_volume(&vol, &path, VolumeFormat::Nifti1).unwrap();
    let back = read_volume(&path, VolumeFormat::Nifti1).unwrap();
    assert_eq!(bits(&back), bits(&vol));
    assert_eq!(back.voxel_size_mm, vol.voxel_size_mm);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = read_volume(std::path::Path::new("/nonexistent/scan.luv"), VolumeFormat::Native).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}

#[test]
fn slice_counts_and_shapes_follow_the_plane_axis() {
    let vol = Volume::new([6, 7, 8], vec![0.5; 336], [1.0; 3]).unwrap();
    let mask = Volume::new([6, 7, 8], vec![0.0; 336], [1.0; 3]).unwrap();
    for (plane, count, shape) in [
        (PlaneLabel::Transversal, 6, (7, 8)),
        (PlaneLabel::Coronal, 7, (6, 8)),
        (PlaneLabel::Sagittal, 8, (6, 7)),
    ] {
        let s = extract_slices(&vol, &mask, plane, "v").unwrap();
        assert_eq!(s.len(), count);
        assert!(s.iter().all(|p| (p.image.height, p.image.width) == shape && p.image.plane == plane));
        assert_eq!(s.iter().map(|p| p.image.slice_index).collect::<Vec<_>>(), (0..count).collect::<Vec<_>>());
    }
}

#[test]
fn mask_of_29_slices_stretches_to_180() {
    let mut vox = vec![0.0f32; 29 * 2 * 2];
    for i in (0..29).step_by(3) {
        vox[i * 4] = 1.0;
    }
    let mask = Volume::new([29, 2, 2], vox, [1.0; 3]).unwrap();
    let target = Volume::new([180, 2, 2], vec![0.0; 720], [1.0; 3]).unwrap();
    let r = resample_mask(&mask, &target).unwrap();
    assert_eq!(r.dims, [180, 2, 2]);
    for i in 0..180 {
        assert_eq!(r.get(i, 0, 0), mask.get(i * 29 / 180, 0, 0));
    }
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vols = SyntheticSpec { n_volumes: 2, dims: (16, 16, 16), axes: (1.0, 2.5), ..Default::default() }
        .generate()
        .unwrap();
    let mut items = Vec::new();
    for v in &vols {
        items.extend(extract_slices(&v.volume, &v.mask, PlaneLabel::Coronal, &v.id).unwrap());
    }
    let ds = split_dataset(items, 0.1, 3).unwrap();
    let manifest = write_dataset(&ds, dir.path(), "manifest.tsv").unwrap();
    let back = SliceDataset::load(&manifest).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.split, ds.split);
    assert_eq!(back.seed, 3);
    for (a, b) in ds.items.iter().zip(&back.items) {
        assert_eq!(a.mask.pixels, b.mask.pixels);
        assert_eq!(a.image.source_id, b.image.source_id);
        assert_eq!(a.image.slice_index, b.image.slice_index);
        for (p, q) in a.image.pixels.iter().zip(&b.image.pixels) {
            assert!((p - q).abs() <= 1.0 / 510.0 + f32::EPSILON);
        }
    }
}

fn pair(id: usize) -> SlicePair {
    let mut image = SliceImage::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
    image.source_id = format!("s{}", id % 5);
    image.slice_index = id;
    SlicePair { mask: image.with_pixels(2, 2, vec![0.0, 0.0, 1.0, 1.0]), image }
}

proptest! {
    #[test]
    fn split_is_a_partition_with_rounded_test_share(n in 1usize..400, f in 0.0f64..0.9, seed in any::<u64>()) {
        let ds = split_dataset((0..n).map(pair).collect(), f, seed).unwrap();
        prop_assert_eq!(ds.len(), n);
        let test = ds.indices(Split::Test);
        let train = ds.indices(Split::Train);
        prop_assert_eq!(test.len(), (f * n as f64).round() as usize);
        prop_assert_eq!(test.len() + train.len(), n);
        let mut seen: Vec<usize> = ds.items.iter().map(|p| p.image.slice_index).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let again = split_dataset((0..n).map(pair).collect(), f, seed).unwrap();
        prop_assert_eq!(again.split, ds.split);
    }

    #[test]
    fn exclusion_drops_exactly_the_listed_sources(n in 0usize..60, drop in prop::collection::vec(0usize..7, 0..4)) {
        let ids: Vec<String> = drop.iter().map(|d| format!("s{d}")).collect();
        let all: Vec<SlicePair> = (0..n).map(pair).collect();
        let kept = exclude_sources(all.clone(), &ids);
        let expected = all.iter().filter(|p| !ids.contains(&p.image.source_id)).count();
        prop_assert_eq!(kept.len(), expected);
        prop_assert!(kept.iter().all(|p| !ids.contains(&p.image.source_id)));
    }

    #[test]
    fn resampled_masks_stay_binary_and_settle(
        src in (1usize..6, 1usize..6, 1usize..6), dst in (1usize..9, 1usize..9, 1usize..9), seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rg = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = src.0 * src.1 * src.2;
        let mask = Volume::new([src.0, src.1, src.2], (0..n).map(|_| rg.gen_bool(0.4) as u8 as f32).collect(), [1.0; 3]).unwrap();
        let target = Volume::new([dst.0, dst.1, dst.2], vec![0.0; dst.0 * dst.1 * dst.2], [1.0; 3]).unwrap();
        let once = resample_mask(&mask, &target).unwrap();
        prop_assert!(once.voxels.iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert_eq!(&resample_mask(&once, &target).unwrap(), &once);
        prop_assert_eq!(&resample_mask(&mask, &mask).unwrap(), &mask);
    }

    #[test]
    fn pgm_round_trip_within_half_a_level(px in prop::collection::vec(0.0f32..=1.0, 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let img = SliceImage::new(1, px.len(), px.clone()).unwrap();
        let path = dir.path().join("x.pgm");
        write_raster(&img, &path).unwrap();
        let back = read_raster(&path).unwrap();
        prop_assert_eq!(back.source_id.as_str(), "x");
        for (a, b) in px.iter().zip(&back.pixels) {
            prop_assert!((a - b).abs() <= 1.0 / 510.0 + f32::EPSILON);
        }
    }

    #[test]
    fn native_bytes_round_trip(d in (1usize..5, 1usize..5, 1usize..5), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rg = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = d.0 * d.1 * d.2;
        let vol = Volume::new([d.0, d.1, d.2], (0..n).map(|_| rg.gen_range(-1e3f32..1e3)).collect(), [0.5, 1.0, 1.5]).unwrap();
        let back = read_native(&write_native(&vol)).unwrap();
        prop_assert_eq!(bits(&back), bits(&vol));
    }
}
