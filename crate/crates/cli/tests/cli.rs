use std::fs;
use std::io::ErrorKind;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn corpus_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

/// A scratch directory holding a copy of the fixture corpus at `corpus/`.
fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("corpus")).unwrap();
    for e in fs::read_dir(corpus_dir()).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join("corpus").join(e.file_name())).unwrap();
    }
    dir
}

fn alexandria(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alexandria"))
        .args(args)
        .current_dir(dir)
        .env_remove("ALEXANDRIA_GUARD_API_KEY")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn extract(dir: &Path) {
    let o = alexandria(
        dir,
        &[
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/extract",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn kb_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("kb"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Listener standing in for a provider endpoint, plus a config naming it.
fn guard_endpoint(dir: &Path, timeout_ms: u64) -> TcpListener {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let port = listener.local_addr().unwrap().port();
    fs::write(
        dir.join("providers.toml"),
        format!(
            "[providers.guard]\nendpoint = \"http://127.0.0.1:{port}/v1\"\n\
             timeout_ms = {timeout_ms}\nmax_retries = 0\nbase_backoff_ms = 1\n"
        ),
    )
    .unwrap();
    listener
}

fn was_contacted(listener: &TcpListener) -> bool {
    match listener.accept() {
        Ok(_) => true,
        Err(e) if e.kind() == ErrorKind::WouldBlock => false,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn extract_twice_gives_identical_store_bytes() {
    let (a, b) = (workdir(), workdir());
    extract(a.path());
    extract(b.path());
    assert_eq!(kb_bytes(a.path()), kb_bytes(b.path()));
    assert_eq!(
        fs::read(a.path().join("out/extract/extraction.csv")).unwrap(),
        fs::read(b.path().join("out/extract/extraction.csv")).unwrap()
    );
}

#[test]
fn knowledge_unit_condition_without_store_is_a_config_error() {
    let dir = workdir();
    let listener = guard_endpoint(dir.path(), 1000);
    let o = alexandria(
        dir.path(),
        &[
            "eval-mcq",
            "--corpus",
            "corpus",
            "--out",
            "out/eval",
            "--provider",
            "guard",
            "--config",
            "providers.toml",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--kb"));
    assert!(!dir.path().join("out/eval").exists());
    assert!(!was_contacted(&listener));

    let o = alexandria(
        dir.path(),
        &[
            "eval-mcq",
            "--corpus",
            "corpus",
            "--out",
            "out/eval",
            "--conditions",
            "NO_CONTEXT,ORIGINAL_TEXT",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn no_subcommand_contacts_a_provider_under_mock() {
    let dir = workdir();
    let listener = guard_endpoint(dir.path(), 1000);
    let mock = ["--provider", "mock", "--config", "providers.toml"];
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/extract",
        ],
        vec![
            "eval-mcq", "--corpus", "corpus", "--kb", "kb", "--out", "out/eval",
        ],
        vec![
            "reconstruct",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/reconstruct",
        ],
        vec![
            "embed-baseline",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/embed",
        ],
    ];
    for step in steps {
        let args: Vec<&str> = step.iter().chain(mock.iter()).copied().collect();
        let o = alexandria(dir.path(), &args);
        assert_eq!(
            code(&o),
            0,
            "{}: {}",
            step[0],
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for args in [
        &[
            "overlap",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/overlap",
        ][..],
        &["validate", "--corpus", "corpus", "--kb", "kb"][..],
        &[
            "report",
            "--run",
            "out/eval",
            "--run",
            "out/overlap",
            "--run",
            "out/embed",
            "--out",
            "out/report",
        ][..],
    ] {
        let o = alexandria(dir.path(), args);
        assert_eq!(
            code(&o),
            0,
            "{}: {}",
            args[0],
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(!was_contacted(&listener));
}

#[test]
fn configured_provider_reaches_the_guard_endpoint() {
    // Control for the test above: the guard does notice a real provider.
    let dir = workdir();
    let listener = guard_endpoint(dir.path(), 200);
    fs::remove_dir_all(dir.path().join("corpus")).unwrap();
    fs::create_dir(dir.path().join("corpus")).unwrap();
    fs::copy(
        corpus_dir().join("physics-dark-matter.txt"),
        dir.path().join("corpus/physics-dark-matter.txt"),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_alexandria"))
        .args([
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out",
            "--provider",
            "guard",
        ])
        .args(["--config", "providers.toml"])
        .current_dir(dir.path())
        .env("ALEXANDRIA_GUARD_API_KEY", "test-key")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(was_contacted(&listener));
}

#[test]
fn missing_api_key_fails_before_any_call() {
    let dir = workdir();
    let listener = guard_endpoint(dir.path(), 200);
    let o = alexandria(
        dir.path(),
        &[
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out",
            "--provider",
            "guard",
            "--config",
            "providers.toml",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ALEXANDRIA_GUARD_API_KEY"));
    assert!(!was_contacted(&listener));
}

#[test]
fn unknown_provider_is_a_config_error() {
    let dir = workdir();
    let o = alexandria(
        dir.path(),
        &[
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out",
            "--provider",
            "nowhere",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn replay_reproduces_outputs() {
    let a = workdir();
    extract(a.path());
    let o = alexandria(
        a.path(),
        &[
            "eval-mcq", "--corpus", "corpus", "--kb", "kb", "--out", "out/eval",
        ],
    );
    assert_eq!(code(&o), 0);

    let b = workdir();
    fs::create_dir_all(b.path().join("recorded")).unwrap();
    fs::copy(
        a.path().join("out/extract/run.json"),
        b.path().join("recorded/extract.json"),
    )
    .unwrap();
    fs::copy(
        a.path().join("out/eval/run.json"),
        b.path().join("recorded/eval.json"),
    )
    .unwrap();
    assert_eq!(
        code(&alexandria(b.path(), &["replay", "recorded/extract.json"])),
        0
    );
    assert_eq!(
        code(&alexandria(b.path(), &["replay", "recorded/eval.json"])),
        0
    );

    assert_eq!(kb_bytes(a.path()), kb_bytes(b.path()));
    for f in [
        "out/extract/run.json",
        "out/eval/cells.csv",
        "out/eval/mcqs.jsonl",
        "out/eval/accuracy.md",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn strict_validation_exits_with_findings_status() {
    let dir = workdir();
    extract(dir.path());
    let o = alexandria(
        dir.path(),
        &[
            "validate",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/validate",
        ],
    );
    assert_eq!(code(&o), 0);
    let o = alexandria(
        dir.path(),
        &["validate", "--corpus", "corpus", "--kb", "kb", "--strict"],
    );
    assert_eq!(code(&o), 2);
    let rows = fs::read_to_string(dir.path().join("out/validate/validation.csv")).unwrap();
    assert!(rows.lines().count() > 1);
}

#[test]
fn second_extract_into_same_store_is_rejected() {
    let dir = workdir();
    extract(dir.path());
    let before = kb_bytes(dir.path());
    let o = alexandria(
        dir.path(),
        &[
            "extract",
            "--corpus",
            "corpus",
            "--kb",
            "kb",
            "--out",
            "out/again",
        ],
    );
    assert_eq!(code(&o), 1);
    assert_eq!(kb_bytes(dir.path()), before);
}

#[test]
fn usage_errors_and_help_statuses() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&alexandria(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&alexandria(dir.path(), &["report", "--out", "x"])), 1);
    assert_eq!(
        code(&alexandria(
            dir.path(),
            &["overlap", "--corpus", "c", "--kb", "k", "--out", "o", "--ns", "x"]
        )),
        1
    );
    assert_eq!(code(&alexandria(dir.path(), &["--help"])), 0);
    assert_eq!(code(&alexandria(dir.path(), &["--version"])), 0);
}

#[test]
fn missing_corpus_is_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = alexandria(
        dir.path(),
        &[
            "extract", "--corpus", "absent", "--kb", "kb", "--out", "out",
        ],
    );
    assert_eq!(code(&o), 1);
}
