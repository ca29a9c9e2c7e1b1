use std::path::Path;

use afdm_isac::scene::Scenario;

fn load(name: &str) -> Scenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name)).unwrap()
}

#[test]
fn shipped_scenes_match_builtins() {
    let r = load("reference.scene");
    r.validate().unwrap();
    assert_eq!(r.afdm.n_sub, 256);
    assert_eq!(r.scene.g(), 101);
    assert_eq!(r.scene.targets.len(), 3);
    assert_eq!(r.to_text(), Scenario::reference().to_text());

    let d = load("desk.scene");
    d.validate().unwrap();
    assert_eq!(d.to_text(), Scenario::desk().to_text());
}

#[test]
fn text_round_trip_is_stable() {
    let d = load("desk.scene");
    let again = Scenario::parse(&d.to_text(), "memory").unwrap();
    assert_eq!(again, d);
}
