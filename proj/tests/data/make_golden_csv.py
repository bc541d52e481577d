"""Writes golden_1000.csv and its expected ingestion counts.

The expected counts come from Python's csv module plus the row rules below,
independently of the C++ reader.
"""
import csv
import io
import json
import random
import re
import unicodedata

rng = random.Random(20240611)
WORDS = ["alpha", "beta", "gamma", "delta", "omega", "kappa", "sigma", "zeta", "café", "naïve"]
KEYWORDS = ["k00", "k01", "k02", "k03", "k04"]


def text(n):
    return " ".join(rng.choice(WORDS) for _ in range(n))


rows = []  # raw CSV lines as bytes
header = b"reply,keyword,reply_likes,main_tweet,main_likes\r\n"  # shuffled column order


def q(s):
    return '"' + s.replace('"', '""') + '"'


for i in range(999):
    kw = rng.choice(KEYWORDS)
    tweet = text(4)
    reply = text(rng.randint(1, 5))
    ml, rl = str(rng.randint(0, 50)), str(rng.randint(0, 9))
    kind = rng.random()
    if kind < 0.04:
        rl = "-3"
    elif kind < 0.08:
        ml = "12.5"
    elif kind < 0.10:
        rl = "many"
    elif kind < 0.14:
        reply = "   "
    elif kind < 0.17:
        line = (q(reply) + "," + kw + "," + rl).encode()  # too few fields
        rows.append(line + b"\r\n")
        continue
    elif kind < 0.19:
        line = (q(reply) + "," + kw + "," + rl + "," + q(tweet) + "," + ml + ",extra").encode()
        rows.append(line + b"\r\n")
        continue
    elif kind < 0.22:
        line = b'"bad \xff\xfe bytes",' + (kw + "," + rl + "," + q(tweet) + "," + ml).encode()
        rows.append(line + b"\r\n")
        continue
    elif kind < 0.27:
        reply = reply + ', with "quotes"\nand a newline'
    elif kind < 0.30:
        reply = "été " + reply  # decomposed accent, NFC-normalized on ingest
    line = ",".join([q(reply), kw, rl, q(tweet), ml]).encode()
    rows.append(line + b"\r\n")

# final row: quoted field never closed
rows.append(b'"never closed,k01,1,tweet words,2\r\n')
data = header + b"".join(rows)
assert len(rows) == 1000
with open("golden_1000.csv", "wb") as f:
    f.write(data)

# Oracle
decoded = data.decode("utf-8", errors="surrogateescape")
reader = csv.reader(io.StringIO(decoded, newline=""), strict=True)
head = next(reader)
cols = {name: i for i, name in enumerate(head)}
counts = {"rows_read": 0, "rows_accepted": 0, "rows_rejected": 0, "rejection_reasons": {}}
per_keyword = {}


def reject(reason):
    counts["rows_rejected"] += 1
    counts["rejection_reasons"][reason] = counts["rejection_reasons"].get(reason, 0) + 1


def norm(s):
    return " ".join(unicodedata.normalize("NFC", s).split())


INT = re.compile(r"^-?[0-9]+$")
all_rows = []
while True:
    try:
        all_rows.append(next(reader))
    except StopIteration:
        break
    except csv.Error:  # end of data inside a quoted field
        all_rows.append(None)
        break
for row in all_rows:
    counts["rows_read"] += 1
    if row is None:
        reject("unterminated quoted field")
        continue
    if len(row) != 5:
        reject("field count mismatch")
        continue
    texts = [row[cols[c]] for c in ("keyword", "main_tweet", "reply")]
    if any(any(0xDC80 <= ord(ch) <= 0xDCFF for ch in t) for t in texts):
        reject("invalid utf-8")
        continue
    likes = [row[cols["main_likes"]].strip(" \t"), row[cols["reply_likes"]].strip(" \t")]
    if not all(INT.match(x) for x in likes):
        reject("non-integer like count")
        continue
    if any(int(x) < 0 for x in likes):
        reject("negative like count")
        continue
    if any(norm(t) == "" for t in texts):
        reject("empty text field")
        continue
    counts["rows_accepted"] += 1
    kw = norm(row[cols["keyword"]])
    per_keyword[kw] = per_keyword.get(kw, 0) + 1

counts["per_keyword_counts"] = per_keyword
with open("golden_1000_expected.json", "w") as f:
    json.dump(counts, f, indent=2, sort_keys=True)
    f.write("\n")
print(json.dumps(counts, sort_keys=True))
