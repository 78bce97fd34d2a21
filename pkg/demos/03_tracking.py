"""Greedy nearest-neighbor linking, and where it can go wrong.

On well separated objects greedy association reproduces the true identities.
When same-class cars drive through one intersection, first-come claims can
swap identities; the score below counts adjacent-frame links that survive.

    python demos/03_tracking.py
"""

from xray_fusion.evaluation import tracking_score
from xray_fusion.simulate import crossing_scene, generate, separated_scene
from xray_fusion.tracking import greedy_track


def main():
    seq, truth = generate(separated_scene(seed=0))
    p, r = tracking_score(greedy_track(seq), truth.tracks, seq)
    print(f"separated scene: {len(truth.tracks)} objects, precision {p:.3f} recall {r:.3f}")

    for seed in range(5):
        seq, truth = generate(crossing_scene(seed))
        tracks = greedy_track(seq)
        p, r = tracking_score(tracks, truth.tracks, seq)
        print(f"crossing scene {seed}: {len(tracks)} tracks for {len(truth.tracks)} cars, precision {p:.3f} recall {r:.3f}")


if __name__ == "__main__":
    main()
