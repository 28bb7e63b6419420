# Run-configuration template for winter-nls-lab
# Copy the block below to run.env (key=value) and pass it with --config run.env.
# Any key can also be set as WINTER_NLS_<KEY> in .env; explicit CLI flags win.

# Model: δ-shell at x = a with strength alpha
A = 1.0
ALPHA = -4.0

# Nonlinearity η|ψ|^{2σ}ψ; g = -1 focusing, +1 defocusing (stationary solver)
ETA = 0.0
SIGMA = 1.0
G = -1

# Evolution grid (L defaults to a + 40)
DX = 0.01
DT = 1e-3
T_FINAL = 1.0

# Stationary scan
P_POINTS = 240
ETA_MIN = -110.0

RUN_CONFIG_TEMPLATE = """\
a=1.0
alpha=-4.0
eta=-1.0
sigma=1.0
dx=0.01
dt=0.001
t_final=1.0
psi0.kind=gaussian
psi0.center=5.0
psi0.width=0.5
psi0.momentum=0.0
observers.stride=10
"""
