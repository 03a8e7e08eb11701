//! Property-based invariants for the coordinate bridge, the perturbation
//! operators, the codec, and the metric layer.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use guiprobe_core::codec::{parse_action, serialize_action, Registry};
use guiprobe_core::metrics::{
    delta_p, match_action, reflection_score, vmc, Percent, StepOutcome, VMC_GAMMA_PX,
};
use guiprobe_core::model::{
    denormalize_point, div_round_half_up, normalize_point, Action, ActionKind, Point, Region, Screen,
    ScrollDirection, Step, SCALE,
};
use guiprobe_core::perturb::{apply, zoom_remap, PerturbKind, PerturbationSpec};

// Screens are heavyweight; build a handful once and index into them.
fn screens() -> &'static Vec<Arc<Screen>> {
    static SCREENS: OnceLock<Vec<Arc<Screen>>> = OnceLock::new();
    SCREENS.get_or_init(|| {
        [(1000u32, 1000u32), (1440, 2560), (1001, 1999)]
            .iter()
            .map(|&(w, h)| {
                let mut px = Vec::with_capacity((w * h * 3) as usize);
                for i in 0..(w * h) {
                    let v = (i % 251) as u8;
                    px.extend_from_slice(&[v, v.wrapping_add(40), v.wrapping_add(90)]);
                }
                Arc::new(Screen::new(w, h, px).unwrap())
            })
            .collect()
    })
}

fn small_screen(w: u32, h: u32) -> Arc<Screen> {
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(&[(x * 3 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]);
        }
    }
    Arc::new(Screen::new(w, h, px).unwrap())
}

fn small_step(w: u32, h: u32, cx: u32, cy: u32, with_region: bool) -> Step {
    let cx = cx % w;
    let cy = cy % h;
    let region = with_region.then(|| {
        Region::new(cx.saturating_sub(3), cy.saturating_sub(2), (cx + 4).min(w), (cy + 3).min(h))
    });
    Step {
        sample_id: "prop-0".into(),
        step_index: 0,
        screen: small_screen(w, h),
        goal: "reach the settings page".into(),
        instruction: Some("tap the gear icon in the corner".into()),
        gt_action: Action::Click(Point::new(cx as i64, cy as i64)),
        gt_region: region,
    }
}

/// Text that satisfies `Action::args_valid` (non-blank after trimming), as a
/// corpus validator would require.
fn arg_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[ -~]{0,20}[!-~][ -~]{0,19}").unwrap()
}

fn action_strategy() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0..=SCALE, 0..=SCALE).prop_map(|(x, y)| Action::Click(Point::new(x, y))),
        prop_oneof![
            Just(ScrollDirection::Up),
            Just(ScrollDirection::Down),
            Just(ScrollDirection::Left),
            Just(ScrollDirection::Right)
        ]
        .prop_map(Action::Scroll),
        arg_text().prop_map(Action::Type),
        arg_text().prop_map(Action::OpenApp),
        Just(Action::PressBack),
        Just(Action::PressHome),
        Just(Action::Enter),
        Just(Action::Complete),
        Just(Action::Wait),
    ]
}

proptest! {
    // No failure-persistence files: everything here is seeded and cheap to
    // rerun, and the default path heuristic does not apply to tests/.
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    // div_round_half_up against its arithmetic definition.
    #[test]
    fn rounding_is_half_up(n in 0i64..2_000_000, d in 1i64..5_000) {
        let q = div_round_half_up(n, d);
        let expected = n / d + i64::from(2 * (n % d) >= d);
        prop_assert_eq!(q, expected);
    }

    // milli → raw → milli is the identity once the screen out-resolves the grid.
    #[test]
    fn normalization_identity_on_fine_screens(idx in 0usize..3, x in 0i64..=SCALE, y in 0i64..=SCALE) {
        let screen = &screens()[idx];
        let raw = denormalize_point(Point::new(x, y), screen).unwrap();
        let back = normalize_point(raw, screen).unwrap();
        prop_assert_eq!(back, Point::new(x, y));
    }

    // raw → milli → raw never moves more than one pixel on those screens.
    #[test]
    fn round_trip_is_within_one_pixel(idx in 0usize..3, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let screen = &screens()[idx];
        let p = Point::new(
            (fx * screen.width as f64) as i64,
            (fy * screen.height as f64) as i64,
        );
        let back = denormalize_point(normalize_point(p, screen).unwrap(), screen).unwrap();
        prop_assert!((back.x - p.x).abs() <= 1 && (back.y - p.y).abs() <= 1, "{p:?} -> {back:?}");
    }

    // Every operator is a pure function of (step, spec).
    #[test]
    fn operators_are_pure(w in 8u32..48, h in 8u32..48, cx in 0u32..64, cy in 0u32..64,
                          with_region in any::<bool>(), kind_idx in 0usize..6) {
        let kinds = [
            PerturbKind::Mask, PerturbKind::Edit, PerturbKind::Zoom,
            PerturbKind::TokenDrop, PerturbKind::SentenceSub, PerturbKind::Ablate,
        ];
        let step = small_step(w, h, cx, cy, with_region);
        let mut spec = PerturbationSpec::new(kinds[kind_idx]);
        spec.mask_block_px = 6;
        let a = apply(&step, &spec).unwrap();
        let b = apply(&step, &spec).unwrap();
        prop_assert_eq!(a.screen.as_bytes(), b.screen.as_bytes());
        prop_assert_eq!(a.remapped_gt, b.remapped_gt);
        prop_assert_eq!(a.instruction, b.instruction);
    }

    // Masking touches exactly the target region.
    #[test]
    fn mask_is_local(w in 8u32..48, h in 8u32..48, cx in 0u32..64, cy in 0u32..64,
                     fill in any::<[u8; 3]>()) {
        let step = small_step(w, h, cx, cy, true);
        let region = step.gt_region.unwrap();
        let mut spec = PerturbationSpec::new(PerturbKind::Mask);
        spec.fill_rgb = fill;
        let out = apply(&step, &spec).unwrap();
        let (before, after) = (step.screen.as_bytes(), out.screen.as_bytes());
        for y in 0..h {
            for x in 0..w {
                let o = ((y * w + x) * 3) as usize;
                let inside = x >= region.x0 && x < region.x1 && y >= region.y0 && y < region.y1;
                if inside {
                    prop_assert_eq!(&after[o..o + 3], &fill[..]);
                } else {
                    prop_assert_eq!(&after[o..o + 3], &before[o..o + 3]);
                }
            }
        }
    }

    // The zoom ground-truth remap stays in frame and inverts to the original
    // quadrant position within a pixel.
    #[test]
    fn zoom_remap_inverts(w in 8u32..64, h in 8u32..64, cx in 0u32..64, cy in 0u32..64) {
        let screen = small_screen(w.max(2), h.max(2));
        let p = Point::new((cx % screen.width) as i64, (cy % screen.height) as i64);
        let mapped = zoom_remap(p, &screen);
        prop_assert!(mapped.x >= 0 && mapped.x <= screen.width as i64);
        prop_assert!(mapped.y >= 0 && mapped.y <= screen.height as i64);
        // Invert the affine map for the quadrant the point belongs to.
        let (ox, qw) = if p.x >= (screen.width / 2) as i64 {
            (screen.width / 2, screen.width - screen.width / 2)
        } else {
            (0, screen.width / 2)
        };
        let (oy, qh) = if p.y >= (screen.height / 2) as i64 {
            (screen.height / 2, screen.height - screen.height / 2)
        } else {
            (0, screen.height / 2)
        };
        let inv = Point::new(
            ox as i64 + div_round_half_up(mapped.x * qw as i64, screen.width as i64),
            oy as i64 + div_round_half_up(mapped.y * qh as i64, screen.height as i64),
        );
        prop_assert!((inv.x - p.x).abs() <= 1 && (inv.y - p.y).abs() <= 1, "{p:?} -> {mapped:?} -> {inv:?}");
    }

    // serialize → parse is lossless in every built-in dialect (screens fine
    // enough that raw-pixel dialects cannot lose grid positions).
    #[test]
    fn codec_round_trips(action in action_strategy(), idx in 0usize..3) {
        let registry = Registry::builtin();
        let screen = &screens()[idx];
        for dialect in ["json", "func", "tag"] {
            let grammar = registry.get(dialect).unwrap();
            let text = serialize_action(&action, &grammar, screen);
            let parsed = parse_action(&text, &grammar, screen);
            prop_assert_eq!(parsed.action.as_ref(), Some(&action), "dialect {}: {:?}", dialect, text);
        }
    }

    // A leading rationale never changes what parses.
    #[test]
    fn rationale_prefix_is_inert(action in action_strategy(), idx in 0usize..3,
                                 prefix in "[a-zA-Z ,.]{0,60}") {
        // A prefix that cannot itself contain an action block in any dialect.
        prop_assume!(!prefix.chars().any(|c| c == '{' || c == '('));
        let registry = Registry::builtin();
        let screen = &screens()[idx];
        for dialect in ["json", "func"] {
            let grammar = registry.get(dialect).unwrap();
            let text = format!("{prefix}\n{}", serialize_action(&action, &grammar, screen));
            let parsed = parse_action(&text, &grammar, screen);
            prop_assert_eq!(parsed.action.as_ref(), Some(&action));
        }
    }

    // Step scoring: success implies type match; unanswered implies failure;
    // grounding is only ever judged for click ground truths.
    #[test]
    fn scoring_implications(pred in action_strategy(), gt in action_strategy()) {
        let registry = Registry::builtin();
        let screen = &screens()[0];
        let grammar = registry.get("json").unwrap();
        let text = serialize_action(&pred, &grammar, screen);
        let outcome = match_action("s", Some(&parse_action(&text, &grammar, screen)), &gt);
        if outcome.sr_ok {
            prop_assert!(outcome.type_ok);
        }
        if outcome.grounding_ok.is_some() {
            prop_assert!(matches!(gt, Action::Click(_)));
        }
        let silent = match_action("s", None, &gt);
        prop_assert!(!silent.answered && !silent.type_ok && !silent.sr_ok);
    }

    // VMC is translation-invariant and monotone in its threshold.
    #[test]
    fn vmc_translation_and_monotonicity(
        pairs in proptest::collection::vec(((0i64..2000, 0i64..2000), (0i64..2000, 0i64..2000)), 1..40),
        dx in -300i64..300, dy in -300i64..300,
    ) {
        let pairs: Vec<(Point, Point)> = pairs
            .into_iter()
            .map(|((ax, ay), (bx, by))| (Point::new(ax, ay), Point::new(bx, by)))
            .collect();
        let shifted: Vec<(Point, Point)> = pairs
            .iter()
            .map(|&(a, b)| (Point::new(a.x + dx, a.y + dy), Point::new(b.x + dx, b.y + dy)))
            .collect();
        prop_assert_eq!(vmc(&pairs, VMC_GAMMA_PX), vmc(&shifted, VMC_GAMMA_PX));
        let loose = vmc(&pairs, VMC_GAMMA_PX * 2).unwrap();
        let tight = vmc(&pairs, VMC_GAMMA_PX).unwrap();
        prop_assert!(loose >= tight);
    }

    // ΔP is antisymmetric and zero against itself.
    #[test]
    fn delta_p_antisymmetry(flags in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let mk = |pick: fn(&(bool, bool)) -> bool| -> Vec<StepOutcome> {
            flags
                .iter()
                .enumerate()
                .map(|(i, f)| StepOutcome {
                    sample_id: format!("s{i:03}"),
                    type_ok: pick(f),
                    grounding_ok: None,
                    sr_ok: pick(f) && i % 3 != 0,
                    pred_point: None,
                    pred_kind: Some(ActionKind::Wait),
                    answered: true,
                })
                .collect()
        };
        let a = mk(|f| f.0);
        let b = mk(|f| f.1);
        let ab = delta_p(&a, &b).unwrap();
        let ba = delta_p(&b, &a).unwrap();
        prop_assert_eq!(ab.delta_p_type.tenths(), -ba.delta_p_type.tenths());
        prop_assert_eq!(ab.delta_p_sr.tenths(), -ba.delta_p_sr.tenths());
        let aa = delta_p(&a, &a).unwrap();
        prop_assert_eq!(aa.delta_p_sr, Percent::ZERO);
        prop_assert_eq!(aa.delta_p_type, Percent::ZERO);
    }

    // Reflection score counts exactly the four reflective kinds.
    #[test]
    fn reflection_counts_reflective_kinds(kinds in proptest::collection::vec(
        proptest::option::of(0usize..9), 1..50)) {
        let all = [
            ActionKind::Click, ActionKind::Scroll, ActionKind::Type, ActionKind::PressBack,
            ActionKind::PressHome, ActionKind::Enter, ActionKind::Complete, ActionKind::OpenApp,
            ActionKind::Wait,
        ];
        let preds: Vec<Option<ActionKind>> = kinds.iter().map(|k| k.map(|i| all[i])).collect();
        let reflective = preds
            .iter()
            .filter(|k| matches!(k, Some(ActionKind::PressBack | ActionKind::PressHome | ActionKind::Complete | ActionKind::Wait)))
            .count();
        let expected = Percent::from_count(reflective, preds.len());
        prop_assert_eq!(reflection_score(&preds).unwrap(), expected);
    }

    // Percent's human form and serialized form agree.
    #[test]
    fn percent_display_matches_serialization(tenths in -2000i64..2000) {
        let p = Percent::from_tenths(tenths);
        let shown: f64 = p.to_string().parse().unwrap();
        prop_assert_eq!(shown, p.as_f64());
        let json = serde_json::to_string(&p).unwrap();
        let back: Percent = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, p);
    }
}
