from pathlib import Path

from setuptools import find_packages, setup


# Utility function to read the README file.
# Used for the long_description.
def read(fname):
    return (Path(__file__).resolve().parent / fname).read_text(encoding="utf-8")


setup(
    name="rsu-cloud-crm",
    version="0.1",
    author="RSU Cloud CRM developers",
    description=(
        "Service placement and multipath flow-rule planner for SDN-controlled "
        "roadside-unit clouds"
    ),
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    license="MIT",
    platforms="any",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    package_data={"rsu_cloud_crm": ["scenarios/*.json"]},
    install_requires=[
        "click>=8.0",
        "matplotlib>=3.5",
        "mkdocs>=1.4.2",
        "networkx>=2.6",
        "numpy>=1.21",
        "pulp>=2.7",
    ],
    entry_points={"console_scripts": ["rsu-crm = rsu_cloud_crm.__main__:cli"]},
    python_requires=">=3.8",
    classifiers=[
        "License :: OSI Approved :: MIT License",
        "Operating System :: POSIX :: Linux",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3 :: Only",
        "Topic :: Scientific/Engineering",
        "Topic :: System :: Networking",
    ],
)
