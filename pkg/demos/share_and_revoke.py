"""A clinic reads part of a patient record once, then loses access.

Walks the three phases with the library API: the authority hands out keys,
the patient encapsulates a record and issues a task for two of its granules,
and the clinic downloads and decrypts.  Replaying the same task afterwards
fails because the store has already moved the capsule on.

    python demos/share_and_revoke.py
"""

import random

from tdcss.actors import run_decryption, run_initialization, run_sharing
from tdcss.errors import TdcssError

RECORD = (b"name: A. Patient      "
          b"born: 1984-03-02      "
          b"blood: O-             "
          b"notes: penicillin allergy")

world = run_initialization(
    ["doctor", "nurse", "cardiology", "billing"],
    {"clinic": ["doctor", "cardiology"], "billing-office": ["billing"]},
    ["patient"],
    rng=random.Random(7),
)

# granule 1 carries the frame header, so it always rides along
handle = run_sharing(world, "patient", RECORD, "doctor AND cardiology", "clinic", indices=[1, 2], ttl=300)
print(f"capsule {handle.capsule_id[:16]}... split into {handle.n} granules; clinic gets {handle.indices}")

seen = run_decryption(world, "clinic", handle)
print("clinic recovered:", seen)

try:
    run_decryption(world, "clinic", handle)
except TdcssError as exc:
    print("replay refused:", type(exc).__name__)

# a fresh task for the full record; the old one stays dead
handle2 = run_sharing(world, "patient", None, None, "clinic", indices=None, ttl=300,
                      capsule_id=handle.capsule_id)
print("second task, all granules:", run_decryption(world, "clinic", handle2))
