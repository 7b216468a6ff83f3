use std::fs;

use relbridge::config::Config;
use relbridge::formats::{
    load_canonical, load_corpus, load_extractions, meta_path, write_canonical, CorpusFormat, ExtractionFormat,
};
use relbridge::store::JsonlStore;
use relbridge_core::corpus::Split;
use relbridge_core::experiment::RecordStore;
use relbridge_core::Span;
use tempfile::tempdir;

#[test]
fn maven_documents() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    let doc = r#"{"id":"doc1","title":"t","content":[{"sentence":"Troops attacked the town .","tokens":["Troops","attacked","the","town","."]},{"sentence":"Nothing .","tokens":["Nothing","."]}],"events":[{"id":"e1","type":"Attack","mention":[{"trigger_word":"attacked","sent_id":0,"offset":[1,2]},{"trigger_word":"attacked","sent_id":0,"offset":[1,2]}]}],"negative_triggers":[]}"#;
    fs::write(&path, format!("{doc}\n")).unwrap();
    let (c, drops) = load_corpus("maven", &[(Split::Train, path)], CorpusFormat::MavenJson).unwrap();
    assert!(drops.dropped.is_empty());
    assert_eq!(c.len(), 2);
    let s = c.get("doc1-0").unwrap();
    assert_eq!(s.trigger_spans, vec![Span::new(1, 2)]);
    assert_eq!(s.doc_id, "doc1");
    assert_eq!(c.stats().train.n_sentences, 2);
    assert_eq!(c.stats().train.n_with_triggers, 1);
}

#[test]
fn ace_json() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("dev.json");
    fs::write(
        &path,
        r#"[{"sentence":"He was fired .","words":["He","was","fired","."],"golden-event-mentions":[{"trigger":{"text":"fired","start":2,"end":3},"event_type":"Personnel:End-Position"}]},{"words":["Hi"],"golden-event-mentions":[]}]"#,
    )
    .unwrap();
    let (c, _) = load_corpus("ace", &[(Split::Valid, path)], CorpusFormat::AceJson).unwrap();
    assert_eq!(c.stats().valid.n_sentences, 2);
    assert_eq!(c.sentences()[0].trigger_spans, vec![Span::new(2, 3)]);
}

#[test]
fn conll_with_relation_column() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("test.conll");
    fs::write(
        &path,
        "# sent_id = a1\n# doc_id = d\nRebels\tO\tO\nbroke\tB-Attack\tB\ninto\tO\tI-REL\nthe\tO\tO\n\nCalm\tO\tO\n.\tO\tO\n",
    )
    .unwrap();
    let (c, _) = load_corpus("c", &[(Split::Test, path.clone())], CorpusFormat::ConllLike).unwrap();
    let a = c.get("a1").unwrap();
    assert_eq!(a.trigger_spans, vec![Span::new(1, 2)]);
    assert_eq!(a.relation_spans, Some(vec![Span::new(1, 3)]));
    assert_eq!(c.len(), 2);

    fs::write(&path, "x\tI-TRG\n").unwrap();
    assert!(load_corpus("c", &[(Split::Test, path)], CorpusFormat::ConllLike).is_err());
}

#[test]
fn char_offsets_drop_misaligned() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("raw.jsonl");
    fs::write(
        &path,
        concat!(
            r#"{"sentence_id":"a","text":"markets fell","tokens":["markets","fell"],"triggers":[[8,12]]}"#,
            "\n",
            r#"{"sentence_id":"b","text":"markets fell","tokens":["markets","fell"],"triggers":[[8,10]]}"#,
            "\n"
        ),
    )
    .unwrap();
    let (c, drops) = load_corpus("r", &[(Split::Train, path)], CorpusFormat::CharOffsetJsonl).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.sentences()[0].trigger_spans, vec![Span::new(1, 2)]);
    assert_eq!(drops.dropped.len(), 1);
    assert_eq!(drops.dropped[0].0, "b");
}

#[test]
fn canonical_round_trip_and_stats_check() {
    let dir = tempdir().unwrap();
    let src = dir.path().join("in.jsonl");
    fs::write(
        &src,
        r#"{"sentence_id":"1","doc_id":"d","tokens":["a","b","c"],"trigger_spans":[[1,2]],"relation_spans":[[0,2]],"split":"train"}
{"sentence_id":"2","doc_id":"d","tokens":["a"],"trigger_spans":[],"split":"test"}
"#,
    )
    .unwrap();
    let c = load_canonical(&src).unwrap();
    let out = dir.path().join("out.jsonl");
    write_canonical(&out, &c, Some("abc")).unwrap();
    assert_eq!(load_canonical(&out).unwrap(), c);
    assert!(fs::read_to_string(meta_path(&out)).unwrap().contains("abc"));

    // tamper with the stats sidecar
    let meta = fs::read_to_string(meta_path(&out)).unwrap().replacen("\"n_sentences\": 1", "\"n_sentences\": 7", 1);
    fs::write(meta_path(&out), meta).unwrap();
    assert!(load_canonical(&out).is_err());

    fs::write(&src, r#"{"sentence_id":"1","doc_id":"d","tokens":["a","b"],"trigger_spans":[[5,3]],"split":"train"}"#).unwrap();
    assert!(load_canonical(&src).is_err());
}

#[test]
fn extraction_adapters() {
    let dir = tempdir().unwrap();
    let tsv = dir.path().join("x.tsv");
    fs::write(&tsv, "# id\tsubj\trel\tobj\timplicit\ns1\t0\t1,2\t3\t0\ns1\t0\t-\t3\t1\tstanford\n").unwrap();
    let ex = load_extractions(&tsv, ExtractionFormat::Tsv).unwrap();
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].relation, vec![1, 2]);
    assert!(ex[1].relation.is_empty() && ex[1].is_implicit);

    let jsonl = dir.path().join("x.jsonl");
    fs::write(&jsonl, r#"{"sentence_id":"s1","subject":[0],"relation":[1],"object":[2]}"#).unwrap();
    let ex = load_extractions(&jsonl, ExtractionFormat::Jsonl).unwrap();
    assert!(!ex[0].is_implicit);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, "schema_version = 1\n[train]\nepochs = 4\n[matrix]\nshots = [0, 5]\n").unwrap();
    let c = Config::load(Some(&path), &["train.epochs=2".into()]).unwrap();
    assert_eq!(c.train.epochs, 2);
    assert_eq!(c.matrix.shots, vec![0, 5]);
    fs::write(&path, "[bogus]\nx = 1\n").unwrap();
    assert!(Config::load(Some(&path), &[]).is_err());
}

#[test]
fn store_recovers_from_torn_append() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    fs::write(&path, "{\"config_hash\":").unwrap();
    let store = JsonlStore::open(&path).unwrap();
    assert!(store.completed().unwrap().is_empty());
    assert_eq!(fs::read_to_string(&path).unwrap(), "");
}
