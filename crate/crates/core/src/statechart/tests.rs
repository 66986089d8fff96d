use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::event::EventInstance;
use crate::model::Model;
use crate::object::ObjectStore;
use crate::testutil::{fixture, model};
use crate::value::ObjectId;

fn machine(m: &Model, owner: &str) -> (MachineInstance, ObjectStore) {
    let store = m.store.clone();
    let class = store.class_of(&ObjectId::new(owner)).unwrap().name.clone();
    let spec = m.statechart_for(&class).unwrap().clone();
    (MachineInstance::new(spec, ObjectId::new(owner), &store).unwrap(), store)
}

fn started(m: &Model, owner: &str, now: u64) -> (MachineInstance, ObjectStore) {
    let (mut mi, mut store) = machine(m, owner);
    mi.initialize(&mut store, &NoPeers, now).unwrap();
    (mi, store)
}

fn pm() -> Model {
    model(&fixture("platform_manager.rxm"))
}

const NESTED: &str = r#"
class K { signal e; signal f; signal ping; }
object k : K;
statechart S for K {
  var n: int;
  initial A;
  state A {
    on e -> B / n := 1;
    entry / n := n + 10;
    exit / n := n * 2;
    initial A1;
    state A1 {
      on e -> A2 / n := 7;
    }
    state A2 {
      on f / raise ping, raise e;
      on ping / n := n + 100;
    }
  }
  state B {
    on ping / raise ping;
  }
}
"#;

#[test]
fn pm_initial_configuration() {
    let (mi, _) = started(&pm(), "pm1", 0);
    assert_eq!(mi.configuration(), ["main.Idle", "Platform_1.Free", "Platform_2.Free", "Entrance_1.Free"]);
    mi.check_configuration().unwrap();
}

#[test]
fn initialize_twice_fails() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    assert!(matches!(mi.initialize(&mut store, &NoPeers, 0), Err(RunError::AlreadyInitialized(_))));
}

#[test]
fn dispatch_before_initialize_fails() {
    let m = pm();
    let (mut mi, mut store) = machine(&m, "pm1");
    let ev = EventInstance::env("pm1", "disconnect", vec![]);
    assert!(matches!(mi.dispatch(&ev, &mut store, &NoPeers, 0), Err(RunError::NotInitialized(_))));
}

#[test]
fn owner_class_must_match() {
    let m = model(&fixture("switch_light_4.rxm"));
    let spec = m.statechart_for("Switch").unwrap().clone();
    let err = MachineInstance::new(spec, ObjectId::new("light1"), &m.store).unwrap_err();
    assert!(matches!(err, RunError::ClassMismatch { .. }), "{err:?}");
}

#[test]
fn switch_click_emits_toggle() {
    let m = model(&fixture("switch_light_4.rxm"));
    let (mut mi, mut store) = started(&m, "switch1", 0);
    assert_eq!(mi.configuration(), ["off"]);
    let r = mi.dispatch(&EventInstance::env("switch1", "click", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert!(r.consumed);
    assert_eq!(r.configuration, ["on"]);
    let sent: Vec<String> = r.emitted.iter().map(|e| format!("{}.{}", e.target, e.name)).collect();
    assert!(sent.contains(&"controller1.toggle".to_string()), "{sent:?}");
}

#[test]
fn connect_segment_stores_arguments_and_takes_platform() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    let ev = EventInstance::env("pm1", "connectSegment", vec![Value::Int(5), Value::Str("entry".into()), Value::Int(1)]);
    let r = mi.dispatch(&ev, &mut store, &NoPeers, 0).unwrap();
    assert!(r.consumed);
    assert_eq!(mi.variable("carID"), Some(&Value::Int(5)));
    assert_eq!(mi.variable("segType"), Some(&Value::Str("entry".into())));
    assert_eq!(mi.variable("dir"), Some(&Value::Int(1)));
    assert_eq!(mi.variable("platform"), Some(&Value::Int(1)));
    assert_eq!(mi.configuration(), [
        "main.connectingSegment.connected",
        "Platform_1.Busy",
        "Platform_2.Free",
        "Entrance_1.Connected"
    ]);
    assert!(mi.timers().is_empty());
}

#[test]
fn unmatched_event_is_not_consumed() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    let before = mi.state();
    let r = mi.dispatch(&EventInstance::env("pm1", "disconnect", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert!(!r.consumed);
    assert!(r.emitted.is_empty());
    assert_eq!(mi.state(), before);
}

#[test]
fn guard_filters_on_parameters() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    mi.dispatch(&EventInstance::env("pm1", "reserve", vec![Value::Int(2)]), &mut store, &NoPeers, 0).unwrap();
    assert!(mi.is_active("Platform_2.Busy").unwrap());
    assert!(mi.is_active("Platform_1.Free").unwrap());
}

#[test]
fn unknown_state_query_is_an_error() {
    let (mi, _) = started(&pm(), "pm1", 0);
    assert!(matches!(mi.is_active("main.Nowhere"), Err(RunError::UnknownState { .. })));
    assert!(!mi.is_active("main.connectingSegment").unwrap());
    assert!(mi.is_active("Platform_1").unwrap());
}

#[test]
fn innermost_transition_wins() {
    let m = model(NESTED);
    let (mut mi, mut store) = started(&m, "k", 0);
    assert_eq!(mi.variable("n"), Some(&Value::Int(10)));
    let r = mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert_eq!(r.configuration, ["A.A2"]);
    assert_eq!(mi.variable("n"), Some(&Value::Int(7)));
    // Outer transition now fires: exit A doubles, then the action sets 1.
    mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert_eq!(mi.configuration(), ["B"]);
    assert_eq!(mi.variable("n"), Some(&Value::Int(1)));
}

#[test]
fn exits_innermost_first_and_enters_outermost_first() {
    let m = model(NESTED);
    let (mut mi, mut store) = started(&m, "k", 0);
    let r = mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert_eq!(r.log, ["fire A.A1 -> A.A2", "exit A.A1", "enter A.A2"]);
    let r = mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert_eq!(r.log, ["fire A -> B", "exit A.A2", "exit A", "enter B"]);
}

#[test]
fn raised_events_run_in_order_within_the_step() {
    let m = model(NESTED);
    let (mut mi, mut store) = started(&m, "k", 0);
    mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    // f raises ping then e: ping adds 100 in A2, then e leaves A.
    mi.dispatch(&EventInstance::env("k", "f", vec![]), &mut store, &NoPeers, 0).unwrap();
    assert_eq!(mi.configuration(), ["B"]);
    assert_eq!(mi.variable("n"), Some(&Value::Int(1)));
    let r = {
        let (mut mi, mut store) = started(&m, "k", 0);
        mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
        mi.dispatch(&EventInstance::env("k", "f", vec![]), &mut store, &NoPeers, 0).unwrap()
    };
    let raised: Vec<&str> = r.log.iter().filter(|l| l.starts_with("raise")).map(String::as_str).collect();
    assert_eq!(raised, ["raise ping", "raise e"]);
}

#[test]
fn runaway_raise_hits_the_microstep_limit() {
    let m = model(NESTED);
    let (mut mi, mut store) = started(&m, "k", 0);
    for _ in 0..2 {
        mi.dispatch(&EventInstance::env("k", "e", vec![]), &mut store, &NoPeers, 0).unwrap();
    }
    let err = mi.dispatch(&EventInstance::env("k", "ping", vec![]), &mut store, &NoPeers, 0).unwrap_err();
    assert!(matches!(err, RunError::MicrostepLimit { .. }), "{err:?}");
}

#[test]
fn choice_without_matching_branch_is_an_error() {
    let m = model(
        r#"
class K { signal go; }
object k : K;
statechart S for K {
  var x: int;
  initial A;
  state A { on go -> C; }
  choice C { [x > 0] -> A; }
}
"#,
    );
    let (mut mi, mut store) = started(&m, "k", 0);
    let err = mi.dispatch(&EventInstance::env("k", "go", vec![]), &mut store, &NoPeers, 0).unwrap_err();
    assert!(matches!(err, RunError::NoBranch { .. }), "{err:?}");
}

/// Firing instants of a periodic timer armed at `armed`, found by walking
/// the clock one millisecond at a time.
fn periodic_oracle(armed: u64, period: u64, until: u64) -> Vec<u64> {
    (armed + 1..=until).filter(|t| (t - armed) % period == 0).collect()
}

#[test]
fn every_timer_fires_on_schedule() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    mi.dispatch(&EventInstance::env("pm1", "reserve", vec![Value::Int(1)]), &mut store, &NoPeers, 0).unwrap();
    mi.dispatch(&EventInstance::env("pm1", "reserve", vec![Value::Int(2)]), &mut store, &NoPeers, 0).unwrap();
    let ev = EventInstance::env("pm1", "connectSegment", vec![Value::Int(5), Value::Str("entry".into()), Value::Int(1)]);
    mi.dispatch(&ev, &mut store, &NoPeers, 0).unwrap();
    assert!(mi.is_active("main.connectingSegment.waiting").unwrap());
    assert_eq!(mi.next_due(), Some(1000));
    let mut fired = vec![];
    while let Some(due) = mi.next_due().filter(|&d| d <= 3500) {
        for ev in mi.due_timers(due) {
            assert_eq!(ev.name, "every(1000)");
            fired.push(due);
            mi.dispatch(&ev, &mut store, &NoPeers, due).unwrap();
        }
    }
    assert_eq!(fired, periodic_oracle(0, 1000, 3500));
    assert_eq!(mi.variable("attempts"), Some(&Value::Int(4)));
}

const DELAYED: &str = r#"
class K { signal leave; }
object k : K;
statechart S for K {
  initial Idle;
  state Idle { after 90s -> Gone; on leave -> Gone; }
  state Gone;
}
"#;

#[test]
fn after_timer_fires_exactly_at_due_time() {
    let m = model(DELAYED);
    let (mut mi, _) = started(&m, "k", 10);
    assert!(mi.due_timers(90_009).is_empty());
    let fired = mi.due_timers(90_010);
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].name, "after(90000)");
    assert!(mi.timers().is_empty());
}

#[test]
fn leaving_a_state_disarms_its_timers() {
    let m = model(DELAYED);
    let (mut mi, mut store) = started(&m, "k", 0);
    mi.dispatch(&EventInstance::env("k", "leave", vec![]), &mut store, &NoPeers, 5).unwrap();
    assert_eq!(mi.next_due(), None);
    assert!(mi.due_timers(200_000).is_empty());
}

#[test]
fn state_restores_exactly() {
    let m = pm();
    let (mut mi, mut store) = started(&m, "pm1", 0);
    mi.dispatch(&EventInstance::env("pm1", "reserve", vec![Value::Int(1)]), &mut store, &NoPeers, 0).unwrap();
    let snap = mi.state();
    let (mut other, _) = machine(&m, "pm1");
    other.restore(&snap).unwrap();
    assert_eq!(other.state(), snap);
    assert_eq!(other.configuration(), mi.configuration());
}

const PM_EVENTS: [&str; 6] = ["connectSegment", "reserve", "release", "disconnect", "take", "free"];

proptest! {
    #[test]
    fn configuration_stays_well_formed(steps in prop::collection::vec((0usize..7, 1i64..3), 0..40)) {
        let m = pm();
        let (mut mi, mut store) = started(&m, "pm1", 0);
        let mut now = 0;
        for (k, n) in steps {
            if k == PM_EVENTS.len() {
                now += 1000;
                for ev in mi.due_timers(now) {
                    mi.dispatch(&ev, &mut store, &NoPeers, now).unwrap();
                }
            } else {
                let args = match PM_EVENTS[k] {
                    "connectSegment" => vec![Value::Int(1), Value::Str("s".into()), Value::Int(n)],
                    "disconnect" => vec![],
                    _ => vec![Value::Int(n)],
                };
                mi.dispatch(&EventInstance::env("pm1", PM_EVENTS[k], args), &mut store, &NoPeers, now).unwrap();
            }
            prop_assert!(mi.check_configuration().is_ok(), "{:?}", mi.check_configuration());
            prop_assert_eq!(mi.configuration().len(), 4);
        }
    }
}

#[test]
fn shared_spec_across_instances() {
    let m = model(&fixture("platform_manager.rxm"));
    let spec: Arc<StatechartSpec> = m.statechart_for("PlatformManager").unwrap().clone();
    assert_eq!(spec.state_path(spec.state_by_path("main.Idle").unwrap()), "main.Idle");
}
