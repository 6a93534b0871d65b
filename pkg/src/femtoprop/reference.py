"""Published measurement values from the 2.5/60 GHz office-floor campaign.

Kept in one place so that tests, reports and the synthetic generators
share a single transcription.
"""

# material -> thickness in cm (None for clutter); glass is 1/8 inch
THICKNESS_CM = {
    "drywall": 2.5,
    "whiteboard": 1.9,
    "clear_glass": 0.32,
    "mesh_glass": 0.32,
    "clutter": None,
}

# band GHz -> material -> (mean dB, std dB, normalised dB/cm or None)
PARTITION_LOSS = {
    2.5: {
        "drywall": (5.4, 2.1, 2.1),
        "whiteboard": (0.5, 2.3, 0.3),
        "clear_glass": (6.4, 1.9, 20.0),
        "mesh_glass": (7.7, 1.4, 24.1),
        "clutter": (2.5, 2.2, None),
    },
    60.0: {
        "drywall": (6.0, 3.4, 2.4),
        "whiteboard": (9.6, 1.3, 5.0),
        "clear_glass": (3.6, 2.2, 11.3),
        "mesh_glass": (10.2, 2.1, 31.9),
        "clutter": (1.2, 1.8, None),
    },
}

MEASUREMENTS_PER_MATERIAL = {
    "drywall": 7, "whiteboard": 4, "clear_glass": 4, "mesh_glass": 4, "clutter": 4,
}

# band GHz -> (path loss exponent, sigma dB) reported for all measured data
PUBLISHED_FIT = {2.5: (2.4, 5.8), 60.0: (2.1, 7.9)}


def partition_truth(band_ghz: float) -> dict[str, float]:
    return {m: v[0] for m, v in PARTITION_LOSS[band_ghz].items()}
