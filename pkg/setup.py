from setuptools import setup

requirements = [
    # package requirements go here
    "pandas>=1.5",
    "numpy",
    "statsmodels",
    "scipy",
    "scikit-learn",
    "joblib",
    "matplotlib",
]

about = {}
with open("miqubo/_version.py", "r") as VERSION:
    exec(VERSION.read(), about)

setup(
    name="miqubo",
    version=about["__version__"],
    description="Feature selection with mutual information QUBOs and SVR evaluation",
    license="MIT",
    packages=["miqubo", "miqubo.solve"],
    entry_points={"console_scripts": ["miqubo=miqubo.cli:cli"]},
    install_requires=requirements,
    python_requires=">=3.8",
    keywords="miqubo feature-selection qubo mutual-information",
    classifiers=[
        "Programming Language :: Python :: 3.9",
    ],
)
