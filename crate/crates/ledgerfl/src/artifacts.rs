//! Run outputs: `metrics.csv`, `summary.json`, `ledger.jsonl` and an SVG
//! accuracy chart.

use std::fmt::Write as _;
use std::path::Path;

use ledgerfl_core::chain::{Block, Ledger, PayloadKind};
use ledgerfl_core::harness::{RoundConfig, RoundMetrics, CSV_HEADER};
use serde::{Deserialize, Serialize};

use crate::{io_err, AppError, AppResult};

pub fn metrics_csv(rows: &[RoundMetrics]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// One ledger block with hashes and payload hex-encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub prev_hash: String,
    pub kind: PayloadKind,
    pub miner: Option<usize>,
    pub payload: String,
    pub hash: String,
}

impl From<&Block> for BlockRecord {
    fn from(b: &Block) -> Self {
        Self {
            height: b.height,
            prev_hash: hex::encode(b.prev_hash),
            kind: b.kind,
            miner: b.miner,
            payload: hex::encode(&b.payload),
            hash: hex::encode(b.hash),
        }
    }
}

impl BlockRecord {
    fn into_block(self) -> Result<Block, String> {
        let hash32 = |s: &str, what: &str| -> Result<[u8; 32], String> {
            let v = hex::decode(s).map_err(|e| format!("{what}: {e}"))?;
            v.try_into()
                .map_err(|_| format!("{what}: expected 32 bytes"))
        };
        Ok(Block {
            height: self.height,
            prev_hash: hash32(&self.prev_hash, "prev_hash")?,
            kind: self.kind,
            payload: hex::decode(&self.payload).map_err(|e| format!("payload: {e}"))?,
            miner: self.miner,
            hash: hash32(&self.hash, "hash")?,
        })
    }
}

pub fn ledger_jsonl(ledger: &Ledger) -> String {
    let mut s = String::new();
    for b in ledger.blocks() {
        s.push_str(&serde_json::to_string(&BlockRecord::from(b)).expect("block record serialises"));
        s.push('\n');
    }
    s
}

/// Parse a dump back into blocks. The chain is not verified here.
pub fn parse_ledger_jsonl(text: &str, origin: &Path) -> AppResult<Vec<Block>> {
    let bad = |line: usize, reason: String| AppError::Parse {
        path: origin.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: BlockRecord =
                serde_json::from_str(l).map_err(|e| bad(i + 1, e.to_string()))?;
            rec.into_block().map_err(|e| bad(i + 1, e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: RoundConfig,
    pub rounds: usize,
    pub final_acc_pct: Option<f64>,
    pub best_acc_pct: Option<f64>,
    pub total_client_s: f64,
    pub total_server_s: f64,
    pub discarded: Vec<usize>,
    pub malicious: Vec<usize>,
    pub ledger_blocks: usize,
    pub ledger_head: String,
    pub exposure_checked: usize,
    pub exposure_violations: usize,
    pub final_stakes: Vec<f64>,
}

/// Accuracy against round as a plain polyline on a 0–100 axis.
pub fn accuracy_svg(rows: &[RoundMetrics], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let n = rows.len().max(2) as f64 - 1.0;
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / n;
    let y = |acc: f64| H - PAD - (H - 2.0 * PAD) * acc.clamp(0.0, 100.0) / 100.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for tick in [0, 25, 50, 75, 100] {
        let ty = y(tick as f64);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{tick}</text>"#,
            PAD - 6.0,
            ty + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">round</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="11" transform="rotate(-90 14 {})">accuracy %</text>"#,
        H / 2.0,
        H / 2.0
    );
    if !rows.is_empty() {
        let pts: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r.acc_pct)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn write_file(path: &Path, contents: &str) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ledgerfl_core::chain::registry;

    fn row(round: u64, acc: f64, gml: Option<f64>) -> RoundMetrics {
        RoundMetrics {
            round,
            acc_pct: acc,
            comp_client_s: 0.5,
            comp_server_s: 0.25,
            comp_total_s: 0.75,
            clusters: 1,
            accepted: 3,
            ignored: 1,
            discarded: 0,
            gml,
            stakes: vec![],
        }
    }

    #[test]
    fn csv_has_header_and_one_line_per_round() {
        let csv = metrics_csv(&[row(1, 50.0, None), row(2, 62.5, Some(0.1))]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "1,50,0.5,0.25,0.75,1,3,1,0,");
        assert_eq!(lines[2], "2,62.5,0.5,0.25,0.75,1,3,1,0,0.1");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn ledger_dump_round_trips_and_verifies() {
        let states = registry(3);
        let mut l = Ledger::new(b"genesis".to_vec());
        l.append_block(PayloadKind::GlobalModel, vec![1, 2, 3], 2, &states)
            .unwrap();
        let text = ledger_jsonl(&l);
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["kind"], "genesis");
        assert_eq!(first["hash"].as_str().unwrap().len(), 64);
        let blocks = parse_ledger_jsonl(&text, Path::new("l.jsonl")).unwrap();
        let back = Ledger::from_blocks(blocks).unwrap();
        back.verify_chain().unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn tampered_dump_fails_verification() {
        let states = registry(2);
        let mut l = Ledger::new(vec![]);
        l.append_block(PayloadKind::GlobalModel, vec![9; 4], 0, &states)
            .unwrap();
        let text = ledger_jsonl(&l).replace("09090909", "09090908");
        let back = Ledger::from_blocks(parse_ledger_jsonl(&text, Path::new("x")).unwrap()).unwrap();
        assert!(back.verify_chain().is_err());
    }

    #[test]
    fn bad_hex_reports_line() {
        let e = parse_ledger_jsonl(
            "\n{\"height\":0,\"prev_hash\":\"zz\",\"kind\":\"genesis\",\"miner\":null,\"payload\":\"\",\"hash\":\"00\"}",
            Path::new("d.jsonl"),
        )
        .unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = accuracy_svg(&[row(1, 10.0, None), row(2, 90.0, None)], "a<b");
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(accuracy_svg(&[], "empty").contains("</svg>"));
    }
}
