mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn generated_models_keep_every_invariant(seed in any::<u64>()) {
        let case = common::generate(seed);
        if let Err(e) = common::check_case(&case) {
            prop_assert!(false, "{}\nmodel:\n{}\nscript:\n{}", e, case.model, case.script);
        }
    }

    #[test]
    fn arbitrary_script_text_never_panics(text in "[a-z0-9 .;()\"\\-]{0,60}") {
        let model = common::load_fixture("fig3.rxm");
        let _ = playweave::parse_script(&text, &model);
    }
}
