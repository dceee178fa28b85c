"""Address-translation models and a reference monitor for memory management.

Submodules:

``decoding_net``  nodes, names and resolution of addresses to canonical names
``authority``     rights and the access-control matrix
``monitor``       typed memory objects, the mapping database and guarded operations
``trace``         trace files and verdicts
``query``         planning queries over a flattened net
``dsl``           the platform description language and built-in topologies
``codegen``       facts files, translation tables and simulator config
``corpus``        vulnerability scenarios
"""

__version__ = "0.1.0"
