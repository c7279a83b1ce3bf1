"""Replay-feed rule shared by the simulation kernels and their tests."""


def record_replay_feed(recorded_y, live_y, k, onset_idx, end_idx):
    """Received measurement at grid index ``k`` under a replay window.

    Passthrough outside ``[onset_idx, end_idx)``; inside, the recorded
    sample shifted back by the onset (the recording starts at t = 0).
    """
    if 0 <= onset_idx <= k < end_idx:
        return recorded_y[k - onset_idx]
    return live_y
