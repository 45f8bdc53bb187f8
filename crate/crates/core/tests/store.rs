mod common;

use std::collections::BTreeMap;

use common::*;
use cruise_core::pipeline::{Language, MatchRecord, UserStory};
use cruise_core::store::{Entity, Store, StoreError, StoreOptions};
use proptest::prelude::*;

fn story(id: usize, version: usize) -> UserStory {
    UserStory::new(format!("US-{id}"), "p", format!("As a user I want feature {id} revision {version}"), vec![], Language::English).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A crash at any write keeps exactly the writes before it.
    #[test]
    fn crash_keeps_committed_prefix(ops in prop::collection::vec((0..6usize, 0..3usize), 1..30), crash in 0..40u64) {
        let dir = tempfile::tempdir().unwrap();
        let mut expected: BTreeMap<String, UserStory> = BTreeMap::new();
        {
            let store = Store::open_with(dir.path(), StoreOptions { durable: false, crash_at_write: Some(crash) }).unwrap();
            for (id, version) in &ops {
                let s = story(*id, *version);
                match store.put(&s) {
                    Ok(()) => {
                        expected.insert(s.id.clone(), s);
                    }
                    Err(StoreError::Crashed) => break,
                    Err(e) => panic!("{e}"),
                }
            }
        }
        let reopened = Store::open_with(dir.path(), fast_options()).unwrap();
        let got: BTreeMap<String, UserStory> = reopened.all::<UserStory>().unwrap().into_iter().map(|s| (s.id.clone(), s)).collect();
        prop_assert_eq!(got, expected);
        // the torn line is gone: new writes land on a clean log
        reopened.put(&story(99, 0)).unwrap();
        drop(reopened);
        prop_assert!(Store::open(dir.path()).unwrap().get::<UserStory>("US-99").unwrap().is_some());
    }

    /// Compaction depends on the record set only, not on write history.
    #[test]
    fn compaction_is_canonical(ops in prop::collection::vec((0..6usize, 0..3usize), 1..30)) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = Store::open_with(a.path(), fast_options()).unwrap();
        for (id, v) in &ops {
            sa.put(&story(*id, *v)).unwrap();
        }
        let sb = Store::open_with(b.path(), fast_options()).unwrap();
        let final_records = sa.all::<UserStory>().unwrap();
        for s in final_records.iter().rev() {
            sb.put(s).unwrap();
        }
        sa.compact().unwrap();
        sb.compact().unwrap();
        prop_assert_eq!(snapshot(a.path()), snapshot(b.path()));
    }
}

#[test]
fn references_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open_with(dir.path(), fast_options()).unwrap();
    let votes = BTreeMap::from([("m".to_string(), 1u8)]);
    let replies = BTreeMap::from([("m".to_string(), "yes".to_string())]);
    let record = MatchRecord::new("US-1", "t:1", votes, replies).unwrap();
    match store.put(&record) {
        Err(StoreError::Integrity { entity, key, .. }) => {
            assert_eq!(entity, Entity::UserStories);
            assert_eq!(key, "US-1");
        }
        other => panic!("expected integrity error, got {other:?}"),
    }
    assert_eq!(store.count(Entity::MatchRecords), 0);
    assert_eq!(std::fs::read(dir.path().join("match_records.jsonl")).unwrap(), b"");
}

#[test]
fn corrupt_interior_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Store::open_with(dir.path(), fast_options()).unwrap();
        store.put(&story(1, 0)).unwrap();
        store.put(&story(2, 0)).unwrap();
    }
    let path = dir.path().join("user_stories.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("{\"key\"", "{\"kee\"", 1)).unwrap();
    assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
}

#[test]
fn rewriting_identical_record_is_free() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open_with(dir.path(), fast_options()).unwrap();
    store.put(&story(1, 0)).unwrap();
    let before = snapshot(dir.path());
    store.put(&story(1, 0)).unwrap();
    assert_eq!(snapshot(dir.path()), before);
}
