"""Formation-conditioned multi-agent play generation.

A single static formation (player positions plus roles) conditions a
non-autoregressive transformer that emits, for every future frame, a shared
mixture-of-Gaussians over per-player displacements.  One mixture component
corresponds to one coherent play scenario for the whole team, so sampling a
component yields a coordinated play rather than per-player noise.

Subpackage map:

- ``numerics``   primitive differentiable ops and a finite-difference harness
- ``data``       tracking-CSV ingestion, normalization, augmentation, and a
                 synthetic route-based dataset generator
- ``model``      the formation encoder / relative-spatial-attention network
                 with the mixture output head
- ``objective``  the four training loss terms
- ``sampler``    single-forward-pass trajectory generation
- ``metrics``    displacement-error and diversity metrics (yards)
- ``trainer``    AdamW + cosine schedule training loop with early stopping
- ``service``    HTTP JSON inference service
- ``cli``        command-line entry points
"""

__version__ = "0.1.0"
