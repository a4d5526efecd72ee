"""Deterministic KDD-format surrogate traffic generator.

The canonical 10% benchmark file must be downloaded by the user (this
package ships no download client).  For tests, demos, and offline runs,
``write_surrogate`` emits a file in the exact same 42-field format whose
label mix follows the benchmark's well-known class distribution
(~19.7% normal, ~79.2% denial-of-service, and so on) and whose feature
columns carry enough class-conditional structure to be learnable.

Three properties of real traffic are reproduced on purpose because the
pipeline is supposed to handle them: the crispest class signal sits in
heavy-tailed count/byte columns where ~1% of rows carry extreme
magnitudes (raw min-max scaling squashes these columns; fence clipping
restores them), the symbolic and rate columns are informative but
overlap across classes, and a few columns are class-independent noise
or constant (exercising feature ranking and degenerate-column scaling).
"""

import numpy as np

from .rng import stream

# Distinct-label histogram of the canonical 10% file, used as mixing weights.
LABEL_WEIGHTS = {
    "smurf": 280790, "neptune": 107201, "normal": 97278, "back": 2203,
    "satan": 1589, "ipsweep": 1247, "portsweep": 1040, "warezclient": 1020,
    "teardrop": 979, "pod": 264, "nmap": 231, "guess_passwd": 53,
    "buffer_overflow": 30, "land": 21, "warezmaster": 20, "imap": 12,
    "rootkit": 10, "loadmodule": 9, "ftp_write": 8, "multihop": 7,
    "phf": 4, "perl": 3, "spy": 2,
}

SERVICES = [
    "http", "smtp", "finger", "domain_u", "auth", "telnet", "ftp", "eco_i",
    "ntp_u", "ecr_i", "other", "private", "pop_3", "ftp_data", "rje", "time",
    "mtp", "link", "remote_job", "gopher", "ssh", "name", "whois", "domain",
    "login", "imap4", "daytime", "ctf", "nntp", "shell", "IRC", "nnsp",
    "http_443", "exec", "printer", "efs", "courier", "uucp", "klogin",
    "kshell", "echo", "discard", "systat", "supdup", "iso_tsap", "hostnames",
    "csnet_ns", "pop_2", "sunrpc", "uucp_path", "netbios_ns", "netbios_ssn",
    "netbios_dgm", "sql_net", "vmnet", "bgp", "Z39_50", "ldap", "netstat",
    "urh_i", "X11", "urp_i", "pm_dump", "tftp_u", "tim_i", "red_i",
]

# long tail of rare services mixed into normal traffic so the one-hot
# vocabulary covers the full list
_COMMON_NORMAL = [
    ("http", 0.28), ("smtp", 0.11), ("ftp_data", 0.07), ("other", 0.06),
    ("private", 0.05), ("domain_u", 0.05), ("telnet", 0.04), ("ftp", 0.04),
    ("finger", 0.03), ("pop_3", 0.03), ("auth", 0.02), ("ntp_u", 0.02),
    ("ecr_i", 0.03), ("eco_i", 0.03), ("urp_i", 0.02), ("tim_i", 0.01),
]
_RARE = [s for s in SERVICES if s not in {n for n, _ in _COMMON_NORMAL}]
NORMAL_SERVICES = _COMMON_NORMAL + [(s, 0.11 / len(_RARE)) for s in _RARE]

# Per-label overrides on top of _BASE.  Numeric knobs: count/srv are
# Poisson means, *_log are log10 byte scales, rates are means of a
# clipped normal.  The class signal concentrates in the count family.
_BASE = dict(
    proto="tcp", services=[("private", 1.0)], flags=[("SF", 1.0)],
    duration=0.0, src_log=2.0, dst_log=2.0, logged_in=0.0,
    count=8, srv_count=8, serror=0.05, rerror=0.05, same_srv=0.8,
    diff_srv=0.08, host_count=120, host_srv=60, wrong_fragment=0.0,
    hot=0.0, failed_logins=0.0, root_shell=0.0, file_creations=0.0,
    num_root=0.0, num_compromised=0.0,
)

_PROFILES = {
    "normal": dict(
        services=NORMAL_SERVICES,
        flags=[("SF", 0.85), ("REJ", 0.07), ("S0", 0.03), ("RSTR", 0.02),
               ("RSTO", 0.01), ("SH", 0.01), ("S1", 0.01)],
        proto_mix=[("tcp", 0.72), ("udp", 0.16), ("icmp", 0.12)],
        duration=15.0, src_log=2.5, dst_log=3.2, logged_in=0.7, count=6, srv_count=6,
        serror=0.06, rerror=0.07, same_srv=0.82, diff_srv=0.06,
        host_count=110, host_srv=90),
    # denial of service: large connection counts, ambiguous symbols
    "smurf": dict(proto="icmp",
                  services=[("ecr_i", 0.45), ("eco_i", 0.25), ("urp_i", 0.2), ("tim_i", 0.1)],
                  src_log=3.0, dst_log=0.0, count=320, srv_count=320,
                  serror=0.05, rerror=0.04, same_srv=0.85, diff_srv=0.04,
                  host_count=235, host_srv=235),
    "neptune": dict(flags=[("S0", 0.6), ("REJ", 0.2), ("SF", 0.2)],
                    services=[("private", 0.35), ("http", 0.15), ("telnet", 0.1),
                              ("smtp", 0.1), ("finger", 0.1), ("other", 0.2)],
                    src_log=0.0, dst_log=0.0, count=240, srv_count=12,
                    serror=0.55, rerror=0.08, same_srv=0.15, diff_srv=0.12,
                    host_count=220, host_srv=30),
    "back": dict(services=[("http", 1.0)], src_log=4.7, dst_log=3.9, hot=2.0,
                 logged_in=1.0, count=130, srv_count=130, same_srv=0.9),
    "teardrop": dict(proto="udp", services=[("private", 0.7), ("other", 0.3)],
                     src_log=1.45, dst_log=0.0, wrong_fragment=2.0,
                     count=180, srv_count=180, same_srv=0.8,
                     host_count=230, host_srv=230),
    "pod": dict(proto="icmp", services=[("ecr_i", 0.7), ("eco_i", 0.3)],
                src_log=3.2, dst_log=0.0, wrong_fragment=1.0,
                count=150, srv_count=150, same_srv=0.8),
    "land": dict(flags=[("S0", 1.0)], services=[("finger", 0.5), ("telnet", 0.5)],
                 src_log=0.0, dst_log=0.0, count=90, srv_count=90,
                 serror=0.6, land=1.0),
    # probes: moderate counts, low service counts, scan-like rates
    "satan": dict(services=[("private", 0.3), ("other", 0.25), ("echo", 0.15),
                            ("discard", 0.15), ("ctf", 0.15)],
                  flags=[("REJ", 0.4), ("SF", 0.35), ("RSTR", 0.25)],
                  src_log=0.5, dst_log=0.5, count=70, srv_count=2,
                  rerror=0.45, serror=0.12, same_srv=0.12, diff_srv=0.55,
                  host_count=230, host_srv=8),
    "ipsweep": dict(proto="icmp",
                    services=[("eco_i", 0.6), ("ecr_i", 0.2), ("other", 0.2)],
                    src_log=0.9, dst_log=0.0, count=30, srv_count=2,
                    rerror=0.1, same_srv=0.5, diff_srv=0.3,
                    host_count=140, host_srv=4),
    "portsweep": dict(flags=[("REJ", 0.45), ("RSTR", 0.3), ("SF", 0.25)],
                      services=[("private", 0.75), ("other", 0.25)],
                      src_log=0.5, dst_log=1.2, count=55, srv_count=1,
                      rerror=0.5, serror=0.15, same_srv=0.05, diff_srv=0.7,
                      host_count=230, host_srv=3),
    "nmap": dict(proto_mix=[("icmp", 0.6), ("tcp", 0.3), ("udp", 0.1)],
                 services=[("eco_i", 0.5), ("private", 0.3), ("domain_u", 0.2)],
                 src_log=0.8, dst_log=0.0, count=25, srv_count=2,
                 rerror=0.2, same_srv=0.4, diff_srv=0.35,
                 host_count=110, host_srv=8),
    # remote-to-local: interactive single connections
    "guess_passwd": dict(services=[("telnet", 0.6), ("ftp", 0.4)], duration=4.0,
                         src_log=2.1, dst_log=2.3, failed_logins=4.0,
                         count=2, srv_count=2, same_srv=0.6),
    "ftp_write": dict(services=[("ftp", 0.7), ("ftp_data", 0.3)], duration=30.0,
                      src_log=2.3, dst_log=2.6, logged_in=1.0, file_creations=1.0,
                      count=2, srv_count=2),
    "imap": dict(services=[("imap4", 1.0)], duration=5.0, src_log=2.0, dst_log=2.5,
                 count=2, srv_count=2),
    "multihop": dict(services=[("telnet", 1.0)], duration=120.0, src_log=2.8,
                     dst_log=3.5, logged_in=1.0, hot=2.0, count=2, srv_count=2),
    "phf": dict(services=[("http", 1.0)], src_log=1.7, dst_log=3.0, logged_in=1.0,
                count=2, srv_count=2),
    "spy": dict(services=[("telnet", 1.0)], duration=200.0, src_log=2.5,
                dst_log=3.3, logged_in=1.0, count=2, srv_count=2),
    "warezclient": dict(services=[("ftp_data", 0.9), ("ftp", 0.1)], duration=60.0,
                        src_log=3.5, dst_log=1.0, logged_in=1.0, hot=2.0,
                        count=3, srv_count=3),
    "warezmaster": dict(services=[("ftp", 1.0)], duration=20.0, src_log=2.0,
                        dst_log=4.5, logged_in=1.0, count=2, srv_count=2),
    # user-to-root: long sessions with root indicators
    "buffer_overflow": dict(services=[("telnet", 0.8), ("ftp", 0.2)], duration=180.0,
                            src_log=3.1, dst_log=3.3, logged_in=1.0, hot=3.0,
                            root_shell=1.0, count=2, srv_count=2),
    "loadmodule": dict(services=[("telnet", 1.0)], duration=90.0, src_log=2.5,
                       dst_log=2.9, logged_in=1.0, root_shell=1.0,
                       file_creations=2.0, count=2, srv_count=2),
    "perl": dict(services=[("telnet", 1.0)], duration=40.0, src_log=2.4,
                 dst_log=3.0, logged_in=1.0, root_shell=1.0, num_root=2.0,
                 count=2, srv_count=2),
    "rootkit": dict(services=[("telnet", 0.7), ("ftp", 0.3)], duration=100.0,
                    src_log=2.6, dst_log=2.8, logged_in=1.0, num_root=3.0,
                    num_compromised=2.0, count=2, srv_count=2),
}

OUTLIER_FRACTION = 0.01   # rows given extreme magnitudes per heavy-tail column
OUTLIER_SCALE_LOG10 = (3.5, 5.5)


def _label_counts(n_rows: int, min_per_label: int = 3) -> dict:
    total_w = sum(LABEL_WEIGHTS.values())
    counts = {}
    for label, w in LABEL_WEIGHTS.items():
        counts[label] = max(min_per_label, int(round(n_rows * w / total_w)))
    # absorb rounding in the largest class so the file has exactly n_rows
    biggest = max(counts, key=counts.get)
    counts[biggest] += n_rows - sum(counts.values())
    return counts


def _pick(rng, weighted, n):
    names = [w[0] for w in weighted]
    probs = np.array([w[1] for w in weighted], dtype=float)
    probs /= probs.sum()
    return rng.choice(names, size=n, p=probs)


def _rate(rng, mu, n, spread=0.15):
    return np.clip(np.round(rng.normal(mu, spread, n), 2), 0.0, 1.0)


def _count(rng, mean, n):
    if mean <= 0:
        return np.zeros(n, dtype=np.int64)
    return rng.poisson(mean, n).astype(np.int64)


def _bytes(rng, log_mu, n):
    if log_mu <= 0:
        return np.zeros(n, dtype=np.int64)
    return np.round(10 ** rng.normal(log_mu, 0.3, n)).astype(np.int64)


def _bernoulli(rng, p, n):
    return (rng.random(n) < p).astype(np.int64)


def _with_outliers(rng, values, fraction=OUTLIER_FRACTION):
    mask = rng.random(values.size) < fraction
    if mask.any():
        scale = 10 ** rng.uniform(*OUTLIER_SCALE_LOG10, int(mask.sum()))
        out = values.astype(np.float64)
        out[mask] = np.round(np.maximum(out[mask], 1.0) * scale)
        return np.minimum(out, 1e13).astype(np.int64)
    return values


def generate_rows(n_rows: int, seed: int) -> list:
    """Generate n_rows record lines (shuffled, labels with trailing '.')."""
    counts = _label_counts(n_rows)
    rows = []
    for label in sorted(counts):
        prof = dict(_BASE)
        prof.update(_PROFILES[label])
        n = counts[label]
        rng = stream(seed, "synth", label)

        if "proto_mix" in prof:
            proto = _pick(rng, prof["proto_mix"], n)
        else:
            proto = np.full(n, prof["proto"], dtype=object)
        service = _pick(rng, prof["services"], n)
        flag = _pick(rng, prof["flags"], n)

        duration = _with_outliers(rng, _count(rng, prof["duration"], n))
        src_bytes = _with_outliers(rng, _bytes(rng, prof["src_log"], n))
        dst_bytes = _with_outliers(rng, _bytes(rng, prof["dst_log"], n))
        land = np.full(n, int(prof.get("land", 0)), dtype=np.int64)
        wrong_fragment = _count(rng, prof["wrong_fragment"], n)
        urgent = _count(rng, 0.02, n)            # class-independent noise
        hot = _count(rng, prof["hot"], n)
        failed = _count(rng, prof["failed_logins"], n)
        logged_in = _bernoulli(rng, prof["logged_in"], n)
        num_compromised = _count(rng, prof["num_compromised"], n)
        root_shell = _bernoulli(rng, prof["root_shell"], n)
        su_attempted = _count(rng, 0.01, n)      # class-independent noise
        num_root = _count(rng, prof["num_root"], n)
        file_creations = _count(rng, prof["file_creations"], n)
        num_shells = _count(rng, 0.01, n)        # class-independent noise
        num_access = _count(rng, 0.02, n)        # class-independent noise
        outbound = np.zeros(n, dtype=np.int64)   # constant column, like the benchmark
        host_login = np.zeros(n, dtype=np.int64)
        guest_login = _bernoulli(rng, 0.1 if label in ("warezclient", "ftp_write") else 0.01, n)
        count = _with_outliers(rng, np.maximum(1, _count(rng, prof["count"], n)))
        srv_count = _with_outliers(rng, np.maximum(1, _count(rng, prof["srv_count"], n)))
        serror = _rate(rng, prof["serror"], n)
        srv_serror = _rate(rng, prof["serror"], n)
        rerror = _rate(rng, prof["rerror"], n)
        srv_rerror = _rate(rng, prof["rerror"], n)
        same_srv = _rate(rng, prof["same_srv"], n)
        diff_srv = _rate(rng, prof["diff_srv"], n)
        srv_diff_host = _rate(rng, 0.05, n)
        host_count = np.minimum(255, np.maximum(1, _count(rng, prof["host_count"], n)))
        host_srv_count = np.minimum(255, np.maximum(1, _count(rng, prof["host_srv"], n)))
        host_same_srv = _rate(rng, prof["same_srv"], n)
        host_diff_srv = _rate(rng, prof["diff_srv"], n)
        host_same_src_port = _rate(rng, 0.3 if prof["proto"] == "icmp" else 0.1, n)
        host_srv_diff_host = _rate(rng, 0.02, n)
        host_serror = _rate(rng, prof["serror"], n)
        host_srv_serror = _rate(rng, prof["serror"], n)
        host_rerror = _rate(rng, prof["rerror"], n)
        host_srv_rerror = _rate(rng, prof["rerror"], n)

        for i in range(n):
            rows.append(",".join([
                str(duration[i]), str(proto[i]), str(service[i]), str(flag[i]),
                str(src_bytes[i]), str(dst_bytes[i]), str(land[i]),
                str(wrong_fragment[i]), str(urgent[i]), str(hot[i]),
                str(failed[i]), str(logged_in[i]), str(num_compromised[i]),
                str(root_shell[i]), str(su_attempted[i]), str(num_root[i]),
                str(file_creations[i]), str(num_shells[i]), str(num_access[i]),
                str(outbound[i]), str(host_login[i]), str(guest_login[i]),
                str(count[i]), str(srv_count[i]),
                f"{serror[i]:.2f}", f"{srv_serror[i]:.2f}", f"{rerror[i]:.2f}",
                f"{srv_rerror[i]:.2f}", f"{same_srv[i]:.2f}", f"{diff_srv[i]:.2f}",
                f"{srv_diff_host[i]:.2f}", str(host_count[i]), str(host_srv_count[i]),
                f"{host_same_srv[i]:.2f}", f"{host_diff_srv[i]:.2f}",
                f"{host_same_src_port[i]:.2f}", f"{host_srv_diff_host[i]:.2f}",
                f"{host_serror[i]:.2f}", f"{host_srv_serror[i]:.2f}",
                f"{host_rerror[i]:.2f}", f"{host_srv_rerror[i]:.2f}",
                label + ".",
            ]))
    order = stream(seed, "synth", "shuffle").permutation(len(rows))
    return [rows[i] for i in order]


def write_surrogate(path, n_rows: int = 30000, seed: int = 20240) -> str:
    """Write a surrogate KDD-format file; returns the path written."""
    lines = generate_rows(n_rows, seed)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def main(argv=None):
    import argparse

    ap = argparse.ArgumentParser(
        description="Write a deterministic KDD-format surrogate traffic file.")
    ap.add_argument("out", help="output file path")
    ap.add_argument("--rows", type=int, default=30000)
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args(argv)
    write_surrogate(args.out, args.rows, args.seed)
    print(f"wrote {args.rows} records to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
