#!/usr/bin/env python3
"""Generates the test fixtures and their expected values.

Run from this directory: python3 gen_fixtures.py

Outputs
  cache.jsonl              chain cache: solc-style deployment/runtime pairs plus demo contracts
  demo/<Dataset>/...       three small datasets with manifests
  demo/expected.json       exclusion and report values computed by the symbolic oracle below
  quality/aggregates.json  per-dataset aggregates transcribed from the published tables
  quality/errors.csv       confirmed wrong assessments per dataset and class
  quality/expected.csv     published grades

The oracle never looks at fingerprints. It knows by construction which
entries refer to which contract, source and code, and derives match keys
from that knowledge.
"""

import csv
import hashlib
import json
from math import ceil
import os
import shutil

HERE = os.path.dirname(os.path.abspath(__file__))


def h32(seed):
    return hashlib.sha256(seed.encode()).digest()


# ---------------------------------------------------------------- bytecode

def meta_v04(seed):
    # {"bzzr0": <32 bytes>} + 0x0029
    return bytes.fromhex("a165627a7a72305820") + h32(seed) + bytes.fromhex("0029")


def meta_v05(seed):
    # {"bzzr1": <32 bytes>, "solc": 0.5.11} + 0x0032
    return (bytes.fromhex("a265627a7a72315820") + h32(seed)
            + bytes.fromhex("64736f6c6343") + bytes([0, 5, 11]) + bytes.fromhex("0032"))


def runtime_body(n):
    # PUSH1 0x80 PUSH1 0x40 MSTORE PUSH4 n PUSH1 0 SSTORE STOP
    return bytes.fromhex("6080604052") + b"\x63" + n.to_bytes(4, "big") + bytes.fromhex("60005500")


def runtime_code(n, meta, seed):
    return runtime_body(n) + meta(seed)


def init_code(runtime_len, style):
    """Deployment prefix that copies and returns the runtime appended after it."""
    head = bytes.fromhex("6080604052")
    if style == "callvalue":
        # CALLVALUE DUP1 ISZERO PUSH1 0x0f JUMPI PUSH1 0 DUP1 REVERT JUMPDEST POP
        head += bytes.fromhex("348015600f57600080fd5b50")

    def tail(off):
        if style == "computed":
            # PUSH2 len DUP1 CODESIZE SUB PUSH1 0 CODECOPY ...: offset not a constant
            return (b"\x61" + runtime_len.to_bytes(2, "big") + bytes.fromhex("80380360003960") + b"\x00"
                    + bytes.fromhex("f300"))
        body = (b"\x61" + runtime_len.to_bytes(2, "big") + b"\x80" + b"\x61" + off.to_bytes(2, "big")
                + bytes.fromhex("600039"))
        if style == "patched":
            # ADDRESS PUSH1 0x01 MSTORE between the copy and the return (library patching)
            body += bytes.fromhex("3060015260")
            body += b"\x00"
            body += bytes.fromhex("f3fe")
            return body
        return body + bytes.fromhex("6000f3fe")

    probe = head + tail(0)
    return head + tail(len(probe))


def deployment(n, meta, seed, style, args=b""):
    rt = runtime_code(n, meta, seed)
    return init_code(len(rt), style) + rt + args


# ---------------------------------------------------------------- contracts

def address(n):
    return "%040x" % (0xC0FFEE0000 + n)


def source(name, version, body):
    return "pragma solidity %s;\n\ncontract %s {\n%s}\n" % (version, name, body)


BODIES = {
    "withdraw": "    mapping(address => uint) balances;\n\n    function withdraw() public {\n"
                "        msg.sender.call.value(balances[msg.sender])();\n        balances[msg.sender] = 0;\n    }\n",
    "add": "    uint public total;\n\n    function add(uint x) public {\n        total += x;\n    }\n",
    "claim": "    address public winner;\n    bytes32 hash;\n\n    function claim(string s) public {\n"
             "        require(keccak256(s) == hash);\n        winner = msg.sender;\n    }\n",
    "owner": "    address owner;\n\n    function setOwner(address o) public {\n        owner = o;\n    }\n"
             "\n    function kill() public {\n        selfdestruct(owner);\n    }\n",
    "loop": "    address[] payees;\n\n    function pay() public {\n        for (uint i = 0; i < payees.length; i++) {\n"
            "            payees[i].transfer(1);\n        }\n    }\n",
}


# Wild contracts: (key, name, version, body, code id, chain, address n, block, source verified)
WILD = [
    ("W1", "Wallet", "^0.4.24", "withdraw", 1, "MAINNET", 1, 5_210_044, True),
    ("W2", "Auction", "0.4.19", "claim", 2, "MAINNET", 2, 4_730_512, True),
    ("W3", "Counter", "^0.4.18", "add", 3, "MAINNET", 3, 4_512_003, True),
    ("W3b", "Counter", "^0.4.18", "add", 3, "MAINNET", 13, 6_012_877, True),
    ("W4", "Token", "0.4.24", "add", 4, "MAINNET", 4, 6_390_001, True),
    ("W5", "Bank", "^0.4.25", "withdraw", 5, "MAINNET", 5, 6_801_234, True),
    ("W6", "Ledger", "^0.5.0", "add", 6, "MAINNET", 6, 7_001_999, True),
    ("W7", "Puzzle", "^0.4.21", "claim", 7, "ROPSTEN", 7, 3_100_450, True),
    # same runtime as W2, different metadata, no verified source
    ("W8", None, None, None, 2, "MAINNET", 8, 5_900_100, False),
]

# the address of W9 is on no chain
UNKNOWN_ADDRESS = address(9)

CRAFTED = [
    ("K1", "Dao", "^0.4.24", "withdraw"),
    ("K2", "Overflow", "0.4.24", "add"),
    ("K3", "Race", "^0.4.24", "claim"),
    ("K4", "Owned", "^0.4.24", "owner"),
    ("K5", "Payout", "^0.4.24", "loop"),
]

SRC = {}        # key -> (source key, contract name, text)
for key, name, version, body, *_ in WILD:
    if name:
        src_key = "S-W3" if key in ("W3", "W3b") else "S-" + key
        SRC[key] = (src_key, name, source(name, version, BODIES[body]))
for key, name, version, body in CRAFTED:
    SRC[key] = ("S-" + key, name, source(name, version, BODIES[body]))


def commented(text):
    """Same normalized text: a line comment and a block comment inside existing whitespace."""
    lines = text.split("\n")
    lines.insert(1, "// injected for the benchmark")
    out = "\n".join(lines)
    return out.replace("function ", "function /* bug */ ", 1).replace("    ", "\t", 2)


def cache_records():
    records = []
    chain_of = {}
    for key, name, version, body, code, chain, n, block, verified in WILD:
        style = ["callvalue", "plain"][n % 2]
        meta = meta_v05 if version == "^0.5.0" else meta_v04
        dep = deployment(code, meta, "deploy-%s" % key, style)
        rt = runtime_code(code, meta, "deploy-%s" % key)
        rec = {"address": address(n), "chain": chain, "deployment_block": block,
               "runtime_hex": rt.hex(), "deploy_hex": dep.hex()}
        if verified:
            rec["source_text"] = SRC[key][2]
            rec["contract_name"] = name
        records.append(rec)
        chain_of[key] = (chain, address(n))

    # bytecode oracle pairs (no source), including two heuristic failures
    styles = ["callvalue", "plain", "callvalue-args", "v05", "patched", "computed"]
    for i in range(40):
        style = styles[i % len(styles)] if i < 12 else ["callvalue", "plain", "v05"][i % 3]
        meta = meta_v05 if style == "v05" else meta_v04
        args = b"\x00" * 31 + bytes([i]) if style.endswith("args") else b""
        base = style.replace("-args", "").replace("v05", "plain")
        dep = deployment(100 + i, meta, "compile-a-%d" % i, base, args)
        # recorded runtime comes from another compilation run half of the time
        seed = "compile-a-%d" % i if i % 2 == 0 else "compile-b-%d" % i
        rt = runtime_code(100 + i, meta, seed)
        records.append({"address": address(200 + i), "chain": ["MAINNET", "ROPSTEN", "RINKEBY"][i % 3],
                        "deployment_block": 2_000_000 + 250_000 * i,
                        "runtime_hex": rt.hex(), "deploy_hex": dep.hex()})
    return records, chain_of


# ---------------------------------------------------------------- datasets

ZEUS_LABELS = [("Reentrancy", 107), ("Int_overflow", 101), ("Tx_Order_Dep", 114)]
ZEUS_ROWS = [
    # id, contract key or raw address, tokens
    ("z1", "W1", "1", "0", "0"),
    ("z2", "W2", "0", "0", "1"),
    ("z3", "W3", "1", "1", "0"),
    ("z4", "W3b", "1", "1", "0"),
    ("z5", "W4", "0", "?", "0"),
    ("z6", "W1", "1", "0", "0"),
    ("z7", "W2", "1", "0", "1"),
    ("z8", "0xnothex", "1", "0", "0"),
    ("z9", "W9", "0", "0", "0"),
    ("z1", "W1", "1", "0", "1"),
    ("z10", "W7", "0", "1", "0"),
    ("z11", "W8", "1", "0", "1"),
]

SOLIDIFI_FILES = [
    # (folder label, swc, file name, contract key, commented copy)
    ("Re-entrancy", 107, "buggy_1.sol", "W5", False),
    ("Re-entrancy", 107, "buggy_2.sol", "K1", False),
    ("Re-entrancy", 107, "buggy_3.sol", "K1", True),
    ("Re-entrancy", 107, "buggy_4.sol", "W3", False),
    ("Overflow-Underflow", 101, "buggy_1.sol", "W6", False),
    ("Overflow-Underflow", 101, "buggy_2.sol", "K2", False),
    ("Overflow-Underflow", 101, "buggy_3.sol", "W1", False),
    ("TOD", 114, "buggy_1.sol", "K3", False),
    ("TOD", 114, "buggy_2.sol", "W2", False),
]

SB_SWC = {"reentrancy": 107, "arithmetic": 101, "front_running": 114, "access_control-105": 105,
          "access_control-106": 106, "denial_of_service-113": 113, "other-109": 109,
          "time_manipulation": 116}
SB_ENTRIES = [
    # name (entry id and file), contract key for the file or None, address key or None, categories
    ("reentrancy/wallet.sol", "W1", "W1", ["reentrancy"]),
    ("reentrancy/dao.sol", "K1", None, ["reentrancy"]),
    ("arithmetic/token.sol", "W4", "W4", ["arithmetic", "front_running"]),
    ("access_control/owned.sol", "K4", None, ["access_control-105", "access_control-106"]),
    ("access_control/owned_copy.sol", "K4", None, ["access_control-105"]),
    ("front_running/puzzle.sol", "W7", "W7", ["front_running"]),
    ("denial_of_service/payout.sol", "K5", None, ["denial_of_service-113", "other-109"]),
    ("time_manipulation/auction.sol", "MISSING", "W2", ["time_manipulation"]),
    ("arithmetic/overflow.sol", "K2", None, ["arithmetic"]),
]

VISIBILITY = {101: "DEP", 104: "DEP", 105: "RUN", 106: "RUN", 107: "RUN", 109: "SRC", 113: "DEP",
              114: "RUN", 115: "DEP", 116: "DEP", 120: "DEP"}


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(text)


def build_demo(chain_of):
    demo = os.path.join(HERE, "demo")
    shutil.rmtree(demo, ignore_errors=True)
    assessments = []   # symbolic records for the oracle

    # Zeus: tabular, addresses only
    rows = ["id,address," + ",".join(l for l, _ in ZEUS_LABELS)]
    occ = {}
    for rid, ref, *tokens in ZEUS_ROWS:
        if ref.startswith("W"):
            addr = "0x" + (chain_of[ref][1] if ref in chain_of else UNKNOWN_ADDRESS).upper()
        else:
            addr = ref
        rows.append(",".join([rid, addr] + tokens))
        occ[rid] = occ.get(rid, 0) + 1
        for (label, swc), tok in zip(ZEUS_LABELS, tokens):
            judgment = {"1": "POSITIVE", "0": "NEGATIVE"}.get(tok, "NA")
            assessments.append(dict(dataset="Zeus", entry=rid, label=label, swc=swc, judgment=judgment,
                                    occ=occ[rid], address=ref if ref.startswith("W") else None, source=None))
    write(os.path.join(demo, "Zeus", "zeus.csv"), "\n".join(rows) + "\n")
    write(os.path.join(demo, "Zeus", "manifest.json"), json.dumps({
        "name": "Zeus", "group": "WILD", "layout": "TABULAR",
        "tabular": {
            "files": ["zeus.csv"], "entry_id": "id",
            "contract": {"address": {"from": "address", "pattern": "^(0x[0-9a-fA-F]{40})$"}},
            "assessments": {"mode": "WIDE", "columns": [{"from": l, "label": l} for l, _ in ZEUS_LABELS]},
        },
        "judgment_map": {"1": "POSITIVE", "0": "NEGATIVE"},
    }, indent=2) + "\n")

    # SolidiFI: one file per injected bug, weakness in the folder name
    for folder, swc, fname, key, comm in SOLIDIFI_FILES:
        text = SRC[key][2]
        write(os.path.join(demo, "SolidiFI", "buggy", folder, fname), commented(text) if comm else text)
        assessments.append(dict(dataset="SolidiFI", entry="buggy/%s/%s" % (folder, fname), label=folder,
                                swc=swc, judgment="POSITIVE", occ=1, address=None, source=key))
    write(os.path.join(demo, "SolidiFI", "manifest.json"), json.dumps({
        "name": "SolidiFI", "group": "CRAFTED", "layout": "FILEPATH_ENCODED",
        "filepath": {
            "path_pattern": "^buggy/(?P<label>[A-Za-z-]+)/buggy_[0-9]+\\.sol$",
            "assessments": {"mode": "SINGLE", "label": {"from": "label"}, "judgment": {"constant": "injected"}},
        },
        "judgment_map": {"injected": "POSITIVE"},
    }, indent=2) + "\n")

    # SBcurated: a JSON index of annotated files
    index = []
    for name, key, addr_key, cats in SB_ENTRIES:
        item = {"name": name, "vulnerabilities": [{"category": c, "lines": [7]} for c in cats]}
        if addr_key:
            item["address"] = "0x" + chain_of[addr_key][1]
        if key != "MISSING":
            text = SRC[key][2]
            write(os.path.join(demo, "SBcurated", "dataset", name), text)
        index.append(item)
        for c in cats:
            assessments.append(dict(dataset="SBcurated", entry=name, label=c, swc=SB_SWC[c], judgment="POSITIVE",
                                    occ=1, address=addr_key, source=None if key == "MISSING" else key))
    write(os.path.join(demo, "SBcurated", "vulnerabilities.json"), json.dumps(index, indent=2) + "\n")
    write(os.path.join(demo, "SBcurated", "manifest.json"), json.dumps({
        "name": "SBcurated", "group": "CRAFTED", "layout": "STRUCTURED",
        "structured": {
            "files": ["vulnerabilities.json"], "entry_id": "/name",
            "contract": {"address": "/address", "source_path": {"from": "/name", "template": "dataset/{}"}},
            "assessments": {"mode": "LIST", "list": "/vulnerabilities",
                            "label": {"from": "/category"}, "judgment": {"constant": "yes"}},
        },
        "judgment_map": {"yes": "POSITIVE"},
    }, indent=2) + "\n")
    return assessments


# ---------------------------------------------------------------- oracle

def identity(a, wild):
    """Symbolic keys after resolution: dict level -> key, or None when unusable."""
    code_of = {w[0]: w[4] for w in wild}
    chain_addr = {w[0]: (w[5], address(w[6])) for w in wild}
    verified = {w[0]: w[8] for w in wild}
    ident = {}
    ref = a["address"]
    src = a["source"]
    if ref == "W9":
        ident["address_present"] = True
    elif ref:
        ident["address_present"] = True
        ident["ADDRESS"] = chain_addr[ref]
        ident["DEPLOY"] = ident["RUNTIME"] = code_of[ref]
        if verified[ref]:
            ident["SOURCE"] = (SRC[ref][0], SRC[ref][1])
    if src:
        ident["SOURCE"] = (SRC[src][0], SRC[src][1])
        if not ref:
            deployments = [w for w in wild if w[8] and SRC.get(w[0], (None,))[0] == SRC[src][0]]
            if len(deployments) == 1:
                w = deployments[0]
                ident["address_present"] = True
                ident["ADDRESS"] = chain_addr[w[0]]
                ident["DEPLOY"] = ident["RUNTIME"] = code_of[w[0]]
    usable = ident.get("address_present") or any(k in ident for k in ("SOURCE", "DEPLOY", "RUNTIME"))
    return ident if usable else None


def keys_of(a):
    ident = a["ident"]
    vis = VISIBILITY[a["swc"]]
    keys = {}
    for level in ("ADDRESS", "SOURCE"):
        if level in ident:
            keys[level] = ident[level]
    if "DEPLOY" in ident and vis != "SRC":
        keys["DEPLOY"] = ident["DEPLOY"]
    if "RUNTIME" in ident and vis == "RUN":
        keys["RUNTIME"] = ident["RUNTIME"]
    return keys


def aid(a):
    base = "%s:%s:%s" % (a["dataset"], a["entry"], a["label"])
    return base if a["occ"] == 1 else "%s:%d" % (base, a["occ"])


def order(a):
    return (a["entry"], a["label"], a["occ"], aid(a))


LEVELS = [("ADDRESS", "CONFLICT_FOR_ADDRESS", "DUPLICATE_ADDRESS"),
          ("SOURCE", "CONFLICT_FOR_SOURCE", "DUPLICATE_SOURCE"),
          ("DEPLOY", "CONFLICT_FOR_BYTECODE", "DUPLICATE_BYTECODE"),
          ("RUNTIME", "CONFLICT_FOR_RUNTIME", "DUPLICATE_RUNTIME")]
OPPOSITE = {("POSITIVE", "NEGATIVE"), ("NEGATIVE", "POSITIVE")}


def oracle(assessments):
    for a in assessments:
        a["ident"] = identity(a, WILD)
        a["reason"] = None
    for a in assessments:
        if a["ident"] is None:
            a["reason"] = "INVALID_CONTRACT_REFERENCE"
    for a in assessments:
        if a["reason"] is None and a["judgment"] == "NA":
            a["reason"] = "STATUS_NA"
    for a in assessments:
        if a["reason"] is None:
            a["keys"] = keys_of(a)

    def level_pass(key_of, conflict, duplicate):
        live = [a for a in assessments if a["reason"] is None]
        marks = {}
        for a in live:
            peers = [b for b in live if b is not a and b["dataset"] == a["dataset"] and b["swc"] == a["swc"]
                     and key_of(a) is not None and key_of(a) == key_of(b)]
            if any((a["judgment"], b["judgment"]) in OPPOSITE for b in peers):
                marks[id(a)] = conflict
            elif any(order(b) < order(a) for b in peers):
                marks[id(a)] = duplicate
        for a in live:
            if id(a) in marks:
                a["reason"] = marks[id(a)]

    level_pass(lambda a: a["entry"], "CONTRADICTION_FOR_ID", "DUPLICATE_OWN_ID")
    for level, conflict, duplicate in LEVELS:
        level_pass(lambda a, level=level: a["keys"].get(level), conflict, duplicate)

    # match groups: all usable assessments, same class, any shared key
    linked = [a for a in assessments if a["ident"] is not None]
    for a in linked:
        a.setdefault("keys", keys_of(a))
    comp = {}
    for a in linked:
        if id(a) in comp:
            continue
        comp[id(a)] = id(a)
        stack = [a]
        while stack:
            x = stack.pop()
            for y in linked:
                if id(y) not in comp and y["swc"] == x["swc"] and any(
                        y["keys"].get(k) is not None and y["keys"].get(k) == v for k, v in x["keys"].items()):
                    comp[id(y)] = id(a)
                    stack.append(y)

    datasets = sorted({a["dataset"] for a in assessments})
    retained = [a for a in assessments if a["reason"] is None]
    ignored = {d: {} for d in datasets}
    for a in assessments:
        if a["reason"]:
            ignored[a["dataset"]][a["reason"]] = ignored[a["dataset"]].get(a["reason"], 0) + 1
    coverage = {}
    for a in retained:
        row = coverage.setdefault(a["swc"], {"sets": set(), "pos": 0, "neg": 0})
        row["sets"].add(a["dataset"])
        row["pos" if a["judgment"] == "POSITIVE" else "neg"] += 1
    overlap = {}
    disagreements = {}
    for x in datasets:
        for y in datasets:
            if x == y:
                n = sum(1 for a in retained if a["dataset"] == x)
            else:
                n = sum(1 for a in retained if a["dataset"] == x and any(
                    b["dataset"] == y and comp[id(b)] == comp[id(a)] for b in retained))
            overlap["%s|%s" % (x, y)] = n
    for a in retained:
        if any(b["dataset"] != a["dataset"] and comp[id(b)] == comp[id(a)]
               and (a["judgment"], b["judgment"]) in OPPOSITE for b in retained):
            k = "%s|%d" % (a["dataset"], a["swc"])
            disagreements[k] = disagreements.get(k, 0) + 1
    groups = len(set(comp.values()))
    return {
        "assessments": len(assessments),
        "retained": {d: sum(1 for a in retained if a["dataset"] == d) for d in datasets},
        "ignored": ignored,
        "reasons": {aid(a): a["reason"] for a in assessments if a["reason"]},
        "coverage": {str(k): [len(v["sets"]), v["pos"], v["neg"]] for k, v in sorted(coverage.items())},
        "overlap": overlap,
        "disagreements": disagreements,
        "groups": groups,
    }


# ---------------------------------------------------------------- quality aggregates

# name: entries, total assessments, weaknesses
TABLE1 = {
    "CodeSmells": (587, 11740, 20), "ContractFuzzer": (379, 379, 7), "Doublade": (319, 319, 5),
    "eThor": (720, 720, 1), "EthRacer": (127, 127, 2), "EverEvolvingG": (344, 344, 5),
    "NPChecker": (50, 250, 5), "Zeus": (1524, 10533, 7), "JiuZhou": (168, 168, 53),
    "NotSoSmartC": (31, 34, 18), "SBcurated": (143, 145, 10), "SolidiFI": (350, 350, 7),
    "SWCregistry": (117, 117, 33),
}
# provided content marks: source, address, deployment code, runtime code
# "mostly" means at least nine in ten, so counts round up
TABLE7 = {
    "CodeSmells": ("", "y", "", ""), "ContractFuzzer": ("y", "", "mostly", "mostly"),
    "Doublade": ("y", "y", "", ""), "eThor": ("mostly", "y", "", "y"), "EthRacer": ("", "y", "", ""),
    "EverEvolvingG": ("", "y", "", ""), "NPChecker": ("", "y", "", ""), "Zeus": ("", "mostly", "", ""),
    "JiuZhou": ("y", "", "y", ""), "NotSoSmartC": ("y", "some", "", ""), "SBcurated": ("y", "some", "", ""),
    "SolidiFI": ("y", "", "", ""), "SWCregistry": ("y", "", "y", "y"),
}
SHARE = {"": 0.0, "some": 0.5, "mostly": 0.9, "y": 1.0}
TABLE8 = {
    "CodeSmells": {"STATUS_NA": 374, "CONFLICT_FOR_SOURCE": 48, "CONFLICT_FOR_RUNTIME": 55,
                   "DUPLICATE_SOURCE": 807, "DUPLICATE_RUNTIME": 46},
    "ContractFuzzer": {"DUPLICATE_BYTECODE": 3, "DUPLICATE_RUNTIME": 1},
    "Doublade": {"CONFLICT_FOR_SOURCE": 6, "DUPLICATE_SOURCE": 24, "DUPLICATE_BYTECODE": 5,
                 "DUPLICATE_RUNTIME": 5},
    "eThor": {"STATUS_NA": 12, "DUPLICATE_SOURCE": 3, "DUPLICATE_RUNTIME": 3},
    "EthRacer": {"STATUS_NA": 11, "DUPLICATE_OWN_ID": 2, "DUPLICATE_SOURCE": 3},
    "EverEvolvingG": {"DUPLICATE_SOURCE": 44, "DUPLICATE_BYTECODE": 8},
    "JiuZhou": {"CONFLICT_FOR_RUNTIME": 3},
    "NotSoSmartC": {},
    "NPChecker": {"DUPLICATE_SOURCE": 30, "DUPLICATE_RUNTIME": 1},
    "SBcurated": {"DUPLICATE_BYTECODE": 10, "DUPLICATE_RUNTIME": 6},
    "SolidiFI": {"DUPLICATE_SOURCE": 7},
    "SWCregistry": {"DUPLICATE_SOURCE": 1},
    "Zeus": {"INVALID_CONTRACT_REFERENCE": 153, "CONTRADICTION_FOR_ID": 18, "CONFLICT_FOR_ADDRESS": 21,
             "CONFLICT_FOR_SOURCE": 5, "CONFLICT_FOR_BYTECODE": 2, "CONFLICT_FOR_RUNTIME": 2,
             "DUPLICATE_OWN_ID": 70, "DUPLICATE_ADDRESS": 2299, "DUPLICATE_SOURCE": 572,
             "DUPLICATE_BYTECODE": 34, "DUPLICATE_RUNTIME": 34},
}
TABLE8_TOTALS = {
    "CodeSmells": (1330, 10410), "ContractFuzzer": (4, 375), "Doublade": (40, 279), "eThor": (18, 702),
    "EthRacer": (16, 111), "EverEvolvingG": (52, 292), "JiuZhou": (3, 165), "NotSoSmartC": (0, 34),
    "NPChecker": (31, 219), "SBcurated": (16, 129), "SolidiFI": (7, 343), "SWCregistry": (1, 116),
    "Zeus": (3210, 7323),
}
ERRORS = [
    ("CodeSmells", 107, 6), ("CodeSmells", 120, 7), ("CodeSmells", 997, 2), ("CodeSmells", 997, 2),
    ("ContractFuzzer", 120, 4), ("ContractFuzzer", 112, 4),
    ("Doublade", 107, 3),
    ("EthRacer", 114, 2),
    ("NPChecker", 104, 3), ("NPChecker", 107, 1), ("NPChecker", 114, 1), ("NPChecker", 120, 2),
    ("NPChecker", 104, 1),
    ("Zeus", 107, 3), ("Zeus", 114, 1), ("Zeus", 101, 4),
]
# completeness, irredundancy, consistency, data quantity
TABLE6 = {
    "CodeSmells": "bad med bad good", "ContractFuzzer": "good good med med", "Doublade": "med med bad med",
    "eThor": "good good good med", "EthRacer": "bad med med bad", "EverEvolvingG": "bad bad good med",
    "NPChecker": "bad bad med med", "Zeus": "bad bad bad good", "JiuZhou": "med good bad med",
    "NotSoSmartC": "med good good med", "SBcurated": "med good good med", "SolidiFI": "med med good med",
    "SWCregistry": "good good good med",
}


def build_quality():
    q = os.path.join(HERE, "quality")
    os.makedirs(q, exist_ok=True)
    agg = []
    for name in sorted(TABLE1):
        entries, total, weaknesses = TABLE1[name]
        src, addr, dep, rt = (SHARE[m] for m in TABLE7[name])
        ign = TABLE8[name]
        assert sum(ign.values()) == TABLE8_TOTALS[name][0], name
        assert total == sum(TABLE8_TOTALS[name]), name
        agg.append({
            "dataset": name, "assessments": total, "weaknesses": weaknesses, "ignored": ign,
            "content": {"entries": entries, "address": ceil(addr * entries), "source": ceil(src * entries),
                        "deploy": ceil(dep * entries), "runtime": ceil(rt * entries)},
        })
    write(os.path.join(q, "aggregates.json"), json.dumps(agg, indent=2) + "\n")
    with open(os.path.join(q, "errors.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "swc_id", "n_errors"])
        w.writerows(ERRORS)
    with open(os.path.join(q, "expected.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "completeness", "irredundancy", "consistency", "data_quantity"])
        for name in sorted(TABLE6):
            w.writerow([name] + [g.upper() for g in TABLE6[name].split()])


def main():
    records, chain_of = cache_records()
    records.sort(key=lambda r: (["MAINNET", "ROPSTEN", "RINKEBY"].index(r["chain"]), r["address"]))
    with open(os.path.join(HERE, "cache.jsonl"), "w", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")
    assessments = build_demo(chain_of)
    expected = oracle(assessments)
    expected["bytecode_pairs"] = sum(1 for r in records if "deploy_hex" in r)
    expected["bytecode_failures"] = 2 * 2  # two patched, two computed-offset pairs
    write(os.path.join(HERE, "demo", "expected.json"), json.dumps(expected, indent=2, sort_keys=True) + "\n")
    build_quality()


if __name__ == "__main__":
    main()
