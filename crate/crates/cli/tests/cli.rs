use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use stegokey_core::config::fixtures;
use stegokey_core::hierarchy::ClassId;
use stegokey_core::stego_wav::WavAudio;
use stegokey_core::Authority;
use tempfile::TempDir;

fn stegokey() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stegokey"));
    cmd.env_remove("STEGOKEY_SERVER").env_remove("STEGOKEY_CONFIG");
    cmd
}

fn run(args: &[&str]) -> Output {
    stegokey().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: stegokey_core::Config) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ca.cfg"), config.render()).unwrap();
        let samples = (0..2)
            .map(|ch| (0..16 * 3000).map(|i: usize| (i.wrapping_mul(40503) >> (3 + ch)) as i16).collect())
            .collect();
        std::fs::write(dir.path().join("cover.wav"), WavAudio::from_samples(11025, samples).unwrap().to_bytes()).unwrap();
        std::fs::write(dir.path().join("secret.png"), (0..=255u8).cycle().take(700).collect::<Vec<_>>()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }
}

#[test]
fn derive_prints_the_decimal_key() {
    let ws = Workspace::new(fixtures::nine_class());
    let want = Authority::new(fixtures::nine_class()).class_key(ClassId(7)).unwrap().value;
    let cfg = ws.arg("ca.cfg");
    assert_eq!(ok(&["derive", "--config", &cfg, "--as", "C3", "--target", "C7"]), format!("{want}\n"));
    assert_eq!(ok(&["--config", &cfg, "derive", "--as", "4", "--target", "7"]), format!("{want}\n"));

    let out = run(&["derive", "--config", &cfg, "--as", "C7", "--target", "C3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("C7 is not an ancestor of C3"));
}

#[test]
fn keygen_lists_class_and_user_keys() {
    let ws = Workspace::new(fixtures::two_class());
    let ca = Authority::new(fixtures::two_class());
    let csv = ok(&["keygen", "--config", &ws.arg("ca.cfg")]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "class,user,epoch,key");
    assert_eq!(lines.len(), 1 + 2 + 8);
    let k2 = ca.class_key(ClassId(2)).unwrap().value;
    assert!(lines.contains(&format!("C2,,0,{k2}").as_str()));
    assert!(lines.contains(&format!("C4,43,0,{}", ca.user_key(43).unwrap().value).as_str()));

    let only = ok(&["keygen", "--config", &ws.arg("ca.cfg"), "--class", "C4"]);
    assert_eq!(only.lines().count(), 1 + 1 + 4);
    assert!(only.lines().skip(1).all(|l| l.starts_with("C4,")));
    assert!(!run(&["keygen", "--config", &ws.arg("ca.cfg"), "--class", "C9"]).status.success());
}

#[test]
fn embed_then_extract_as_owner_and_ancestor() {
    let ws = Workspace::new(fixtures::nine_class());
    let cfg = ws.arg("ca.cfg");
    ok(&[
        "embed", "--cover", &ws.arg("cover.wav"), "--payload", &ws.arg("secret.png"), "--class", "C7", "--config", &cfg,
        "--out", &ws.arg("stego.wav"),
    ]);
    let cover = std::fs::read(ws.path("cover.wav")).unwrap();
    let stego = std::fs::read(ws.path("stego.wav")).unwrap();
    assert_eq!(stego.len(), cover.len());
    assert_ne!(stego, cover);
    let secret = std::fs::read(ws.path("secret.png")).unwrap();

    // owner, to a file
    ok(&["extract", "--config", &cfg, "--class", "C7", "--user", "701", "--in", &ws.arg("stego.wav"), "--out", &ws.arg("got.png")]);
    assert_eq!(std::fs::read(ws.path("got.png")).unwrap(), secret);

    // ancestors C1 (two levels up) and C4, to stdout
    for (class, user) in [("C1", "101"), ("C4", "402")] {
        let out = run(&["extract", "--config", &cfg, "--class", class, "--user", user, "--in", &ws.arg("stego.wav")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(out.stdout, secret);
        assert!(String::from_utf8_lossy(&out.stderr).contains("opened with the C7 key"));
    }

    // unrelated and lower classes fail
    for (class, user) in [("C5", "501"), ("C9", "901")] {
        let out = run(&["extract", "--config", &cfg, "--class", class, "--user", user, "--in", &ws.arg("stego.wav")]);
        assert!(!out.status.success());
        assert!(out.stdout.is_empty());
    }
    let out = run(&[
        "extract", "--config", &cfg, "--class", "C9", "--user", "901", "--intended", "C7", "--in", &ws.arg("stego.wav"),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("C9 cannot derive the key of C7"));
    // a user outside the claimed class
    assert!(!run(&["extract", "--config", &cfg, "--class", "C7", "--user", "101", "--in", &ws.arg("stego.wav")]).status.success());
}

#[test]
fn simulate_churn_prints_the_rekey_log() {
    let ws = Workspace::new(fixtures::nine_class());
    std::fs::write(
        ws.path("churn.txt"),
        "# three batches\njoin-user C2:291; join-user C4:491; join-user C7:791\n\
         leave-user 102; leave-user 202; leave-user 302; leave-user 402; leave-user 502\n\
         join-user C8:891; join-user C9:991; leave-user 103\n",
    )
    .unwrap();
    let csv = ok(&["simulate-churn", "--config", &ws.arg("ca.cfg"), "--script", &ws.arg("churn.txt")]);
    assert_eq!(csv, "epoch,joins,leaves,unicast_msgs,broadcast_msgs\n0,3,0,6,1\n1,0,5,0,1\n2,2,1,4,1\n");

    std::fs::write(ws.path("bad.txt"), "join-user C2:291\nleave-user 4242\n").unwrap();
    let out = run(&["simulate-churn", "--config", &ws.arg("ca.cfg"), "--script", &ws.arg("bad.txt")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch 2"));
}

#[test]
fn inspect_wav_with_and_without_keys() {
    let ws = Workspace::new(fixtures::two_class());
    let plain = ok(&["inspect-wav", &ws.arg("cover.wav")]);
    assert!(plain.contains("channels        2\n"));
    assert!(plain.contains("sample rate     11025 Hz\n"));
    assert!(plain.contains("stego frames    3000\n"));
    assert!(!plain.contains("start frame"));

    let keyed = ok(&["inspect-wav", &ws.arg("cover.wav"), "--config", &ws.arg("ca.cfg"), "--class", "C4", "--json"]);
    let info: stegokey_api::WavInfo = serde_json::from_str(&keyed).unwrap();
    let k = Authority::new(fixtures::two_class()).class_key(ClassId(4)).unwrap().value;
    let g = info.geometry.unwrap();
    assert_eq!((g.start_frame as u64, u64::from(g.loc1)), (k % 1500, k % 4));

    std::fs::write(ws.path("junk.wav"), b"not a wav").unwrap();
    assert!(!run(&["inspect-wav", &ws.arg("junk.wav")]).status.success());
}

fn spawn_recv(args: &[&str]) -> (std::process::Child, String) {
    let mut child = stegokey().arg("recv").args(args).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected first line {line:?}")).to_owned();
    (child, addr)
}

fn spool_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn send_to_receivers_and_open_on_arrival() {
    let ws = Workspace::new(fixtures::two_class());
    let cfg = ws.arg("ca.cfg");
    ok(&[
        "embed", "--cover", &ws.arg("cover.wav"), "--payload", &ws.arg("secret.png"), "--class", "C4", "--config", &cfg,
        "--out", &ws.arg("stego.wav"), "--name", "photo.png",
    ]);

    let (parent, parent_addr) = spawn_recv(&[
        "--listen", "127.0.0.1:0", "--spool", &ws.arg("spool-c2"), "--count", "1", "--config", &cfg, "--class", "C2",
        "--user", "21",
    ]);
    let (plain, plain_addr) = spawn_recv(&["--listen", "127.0.0.1:0", "--spool", &ws.arg("spool-raw"), "--count", "1"]);

    let to = format!("{parent_addr},{plain_addr}");
    let report = ok(&["send", "--to", &to, "--in", &ws.arg("stego.wav")]);
    assert_eq!(report.lines().filter(|l| l.ends_with("\tdelivered")).count(), 2);

    let parent = parent.wait_with_output().unwrap();
    let plain = plain.wait_with_output().unwrap();
    assert!(parent.status.success() && plain.status.success());
    assert!(String::from_utf8_lossy(&parent.stdout).contains("opened as C4"));

    let stego = std::fs::read(ws.path("stego.wav")).unwrap();
    assert_eq!(spool_files(&ws.path("spool-raw")), ["frame-000001.wav"]);
    assert_eq!(std::fs::read(ws.path("spool-raw").join("frame-000001.wav")).unwrap(), stego);
    assert_eq!(spool_files(&ws.path("spool-c2")), ["frame-000001.payload", "frame-000001.wav"]);
    assert_eq!(std::fs::read(ws.path("spool-c2").join("frame-000001.payload")).unwrap(), std::fs::read(ws.path("secret.png")).unwrap());
}

#[test]
fn service_frames_are_marked_in_the_spool() {
    let ws = Workspace::new(fixtures::two_class());
    let (recv, addr) = spawn_recv(&["--listen", "127.0.0.1:0", "--spool", &ws.arg("spool"), "--count", "1"]);
    ok(&["send", "--to", &addr, "--in", &ws.arg("cover.wav"), "--service"]);
    assert!(recv.wait_with_output().unwrap().status.success());
    assert_eq!(spool_files(&ws.path("spool")), ["frame-000001.service.wav"]);
}

#[test]
fn partial_delivery_failure_is_reported() {
    let ws = Workspace::new(fixtures::two_class());
    let (recv, addr) = spawn_recv(&["--listen", "127.0.0.1:0", "--spool", &ws.arg("spool"), "--count", "1"]);
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    let out = run(&["send", "--to", &format!("{dead},{addr}"), "--in", &ws.arg("cover.wav")]);
    assert!(!out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with(&format!("{dead}\tfailed")), "{stdout}");
    assert_eq!(lines[1], format!("{addr}\tdelivered"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 of 2 deliveries failed"));
    assert!(recv.wait_with_output().unwrap().status.success());
}

#[test]
fn remote_server_is_shared_between_invocations() {
    let ws = Workspace::new(fixtures::two_class());
    let mut server = stegokey()
        .args(["serve", "--config", &ws.arg("ca.cfg"), "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.as_mut().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("authority listening on ").unwrap().to_owned();

    let before = ok(&["--server", &url, "derive", "--as", "C2", "--target", "C4"]);
    std::fs::write(ws.path("leave.txt"), "leave-user 44\n").unwrap();
    assert_eq!(ok(&["--server", &url, "simulate-churn", "--script", &ws.arg("leave.txt")]).lines().nth(1), Some("1,0,1,0,1"));
    // the second invocation sees the epoch the first one moved to
    let after = stegokey().args(["derive", "--as", "C2", "--target", "C4"]).env("STEGOKEY_SERVER", &url).output().unwrap();
    assert!(after.status.success());
    assert_ne!(String::from_utf8(after.stdout).unwrap(), before);
    server.kill().unwrap();
    server.wait().unwrap();
}

#[test]
fn missing_config_is_explained() {
    let out = run(&["derive", "--as", "C1", "--target", "C2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pass --config <file> or --server <url>"));
}

#[test]
fn shipped_configs_match_the_fixtures() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, config) in [("nine-class.cfg", fixtures::nine_class()), ("two-class.cfg", fixtures::two_class())] {
        let path = dir.join(file);
        let parsed: stegokey_core::Config = std::fs::read_to_string(&path).unwrap().parse().unwrap();
        assert_eq!(parsed, config, "{file}");
        let path = path.to_str().unwrap();
        assert!(ok(&["keygen", "--config", path]).starts_with("class,user,epoch,key\n"));
    }
}
