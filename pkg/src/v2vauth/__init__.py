"""Pseudonymous vehicle-to-vehicle message authentication.

Modules: numtheory (residuosity and roots), polyalg (share polynomials),
codec (hashes, PRP, wire format), authority, vehicle, simnet and cli.
"""
from .authority import AuthenticationAuthority, BlacklistMode, Profile, setup, setup_literal
from .codec import Envelope
from .polyalg import Family
from .vehicle import Reason, Vehicle, Verdict

__all__ = ["AuthenticationAuthority", "BlacklistMode", "Envelope", "Family", "Profile", "Reason", "Vehicle",
           "Verdict", "setup", "setup_literal"]
__version__ = "0.1.0"
