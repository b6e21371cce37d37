use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_atlas::editor::{merge, split, AtlasImage, Square};
use scene_atlas::field::{MappingConfig, MappingField, PixelCoord};
use scene_atlas::hashgrid::{hash_index, HashGrid, HashGridConfig};
use scene_atlas::image::Image;
use scene_atlas::router::{is_handle, parse_action, redact, split_args, SceneRegistry};

fn small_grid() -> HashGridConfig {
    HashGridConfig {
        levels: 6,
        base_resolution: 4,
        per_level_scale: 2.0,
        table_size: 256,
        feature_dim: 2,
    }
}

proptest! {
    #[test]
    fn hash_slots_stay_in_table(ix in any::<u32>(), iy in any::<u32>(), log2 in 1u32..20) {
        prop_assert!(hash_index(ix, iy, 1 << log2) < 1 << log2);
    }

    #[test]
    fn encoding_is_linear_in_the_tables(u in 0.0f64..=1.0, v in 0.0f64..=1.0, k in -3.0f64..3.0, seed in any::<u64>()) {
        let g: HashGrid<f64> = HashGrid::init(small_grid(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut scaled = g.clone();
        scaled.tables.iter_mut().for_each(|t| *t *= k);
        let a = g.encode(u, v).unwrap();
        let b = scaled.encode(u, v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x * k - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn encoding_is_bounded_by_the_table(u in 0.0f64..=1.0, v in 0.0f64..=1.0, seed in any::<u64>()) {
        let g: HashGrid<f64> = HashGrid::init(small_grid(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let max = g.tables.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        for x in g.encode(u, v).unwrap() {
            prop_assert!(x.abs() <= max + 1e-12);
        }
    }

    #[test]
    fn out_of_domain_points_are_rejected(u in 1.0001f64..10.0) {
        let g: HashGrid<f64> = HashGrid::zeros(small_grid()).unwrap();
        prop_assert!(g.encode(u, 0.5).is_err());
        prop_assert!(g.encode(0.5, -u).is_err());
    }

    #[test]
    fn mapping_heads_respect_their_squares(x in 0.0f64..=1.0, y in 0.0f64..=1.0, t in 0.0f64..=1.0, seed in any::<u64>(), gain in 0.0f32..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m: MappingField<f32> = MappingField::init(MappingConfig { layers: 3, width: 16 }, &mut rng);
        for l in m.mlp.layers.iter_mut() {
            l.weight.iter_mut().for_each(|w| *w *= gain);
        }
        let o = m.map_point(PixelCoord::new(x, y, t).unwrap()).unwrap();
        prop_assert!((0.0..=0.5).contains(&o.u1) && (0.0..=0.5).contains(&o.v1));
        prop_assert!((0.5..=1.0).contains(&o.u2) && (0.5..=1.0).contains(&o.v2));
        prop_assert!((0.0..=1.0).contains(&o.alpha));
    }

    #[test]
    fn unmodified_merge_splits_back(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let fg = Image::from_fn(6, 6, 4, |_, _, c| {
            if c == 3 { [0.0, 1.0, rng.gen::<f32>()][rng.gen_range(0..3)] } else { rng.gen() }
        }).quantized();
        let bg = Image::from_fn(6, 6, 3, |_, _, _| rng.gen()).quantized();
        let fg = AtlasImage::new(Square::Foreground, fg).unwrap();
        let bg = AtlasImage::new(Square::Background, bg).unwrap();
        let merged = AtlasImage::new(Square::Merged, merge(&fg, &bg).unwrap().image.quantized()).unwrap();
        let (f2, b2) = split(&merged, &fg, &bg, None).unwrap();
        prop_assert_eq!(f2.image.to_u8(), fg.image.to_u8());
        prop_assert_eq!(b2.image.to_u8(), bg.image.to_u8());
    }

    #[test]
    fn planner_text_never_panics_the_parser(text in ".{0,200}") {
        let _ = parse_action(&text);
    }

    #[test]
    fn redaction_leaves_only_issued_handles(tokens in prop::collection::vec("[a-z0-9]{8}", 1..6), keep in prop::collection::vec(any::<bool>(), 6)) {
        let reg = SceneRegistry::in_memory(1);
        let issued = reg.register(Path::new("/s")).unwrap();
        let mut text = format!("start {issued} ");
        for (t, k) in tokens.iter().zip(&keep) {
            text.push_str(&if *k { format!("{issued}, ") } else { format!("{t}.scn; ") });
        }
        let out = redact(&text, &reg);
        for word in out.split(|c: char| c.is_whitespace() || c == ',' || c == ';') {
            if word.ends_with(".scn") {
                prop_assert!(is_handle(word) && reg.contains(word), "{word} in {out}");
            }
        }
        prop_assert!(out.contains(&issued));
    }

    #[test]
    fn argument_splitting_trims(parts in prop::collection::vec("[a-z0-9.]{1,8}", 1..5)) {
        let joined = parts.iter().map(|p| format!("  {p} ")).collect::<Vec<_>>().join(",");
        prop_assert_eq!(split_args(&joined), parts);
    }
}
